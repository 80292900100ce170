from __future__ import annotations

import argparse

from riskbench.core.bench import speedup_ratio
from riskbench.core.models import BenchRecord, Strategy

TOLERANCE = 5e-4

# (n_cpus, time, published ratio) rows of the published cluster runs.
REGRESSION_TABLE = [
    (2, 838.004, 1.0),
    (4, 285.356, 0.9789),
    (6, 172.146, 0.973597),
    (8, 124.78, 0.959407),
    (10, 97.1792, 0.958142),
    (16, 67.9677, 0.821963),
    (32, 45.6611, 0.592023),
    (64, 34.2828, 0.387998),
    (96, 31.4682, 0.280317),
    (128, 30.5574, 0.215937),
    (160, 16.1006, 0.327347),
    (192, 30.7013, 0.142908),
    (224, 30.5024, 0.123199),
    (256, 31.3172, 0.104935),
]

VANILLA_TABLES = {
    Strategy.FULL_LOAD: [
        (2, 8.85665, 1.0), (4, 3.55046, 0.831503), (8, 3.86341, 0.327492), (10, 4.06038, 0.24236),
        (12, 3.9264, 0.205061), (14, 3.9624, 0.171937), (16, 4.05038, 0.145775), (18, 3.9524, 0.131813),
        (20, 4.13337, 0.112775), (24, 3.77643, 0.101967), (28, 3.9504, 0.0830357), (32, 4.35934, 0.0655371),
        (36, 4.05938, 0.0623364), (40, 4.06538, 0.0558604), (45, 4.12437, 0.0488044), (50, 4.19136, 0.0431239),
    ],
    Strategy.SHARED_FS: [
        (2, 16.3965, 1.0), (4, 4.91225, 1.11263), (8, 2.52961, 0.925974), (10, 2.08968, 0.871824),
        (12, 1.77673, 0.838952), (14, 1.57676, 0.799912), (16, 1.40579, 0.777572), (18, 1.27181, 0.758371),
        (20, 1.17682, 0.73331), (24, 1.02784, 0.69358), (28, 0.928859, 0.653789), (32, 0.848871, 0.623086),
        (36, 0.786881, 0.595353), (40, 0.832873, 0.504787), (45, 0.768884, 0.484661), (50, 0.738887, 0.452874),
    ],
    Strategy.SERIALIZED_LOAD: [
        (2, 7.17891, 1.0), (4, 1.73774, 1.37706), (8, 1.81472, 0.565132), (10, 1.87771, 0.424802),
        (12, 1.88571, 0.346091), (14, 1.81372, 0.30447), (16, 1.9367, 0.247118), (18, 1.9497, 0.216591),
        (20, 1.87272, 0.201759), (24, 1.84772, 0.168925), (28, 1.77273, 0.149986), (32, 1.83072, 0.126495),
        (36, 1.75773, 0.116691), (40, 1.81572, 0.101378), (45, 1.78273, 0.0915209), (50, 1.70474, 0.0859417),
    ],
}

PORTFOLIO_TABLES = {
    Strategy.FULL_LOAD: [
        (2, 5770.16, 1.0), (4, 1980.35, 0.971238), (6, 1154.05, 0.999983), (8, 823.056, 1.00152),
        (10, 641.166, 0.999943), (16, 389.295, 0.988139), (32, 187.441, 0.993031), (64, 93.2008, 0.982715),
        (96, 61.5176, 0.987335), (128, 46.7399, 0.972068), (160, 38.4812, 0.943068), (192, 31.5312, 0.958107),
        (224, 27.2929, 0.948056), (256, 24.4743, 0.924566), (320, 26.1740, 0.6911), (384, 20.0550, 0.7512),
        (512, 19.7960, 0.5704),
    ],
    Strategy.SHARED_FS: [
        (2, 5799.66, 1.0), (4, 1939.46, 0.996783), (6, 1161.25, 0.998865), (8, 828.07, 1.00055),
        (10, 645.544, 0.998239), (16, 389.097, 0.993696), (32, 193.937, 0.964676), (64, 100.384, 0.917062),
        (96, 69.7884, 0.874774), (128, 54.8667, 0.83232), (160, 41.9726, 0.869039), (192, 35.7536, 0.849278),
        (224, 31.3362, 0.829948), (256, 28.2047, 0.806382),
    ],
    Strategy.SERIALIZED_LOAD: [
        (2, 5776.33, 1.0), (4, 1925.29, 1.00008), (6, 1157.22, 0.998313), (8, 840.403, 0.981897),
        (10, 641.096, 1.00112), (16, 386.745, 0.995716), (32, 189.354, 0.984045), (64, 94.7316, 0.967868),
        (96, 63.1974, 0.962119), (128, 47.6968, 0.953585), (160, 41.1997, 0.88178), (192, 33.5979, 0.900132),
        (224, 31.5822, 0.820171), (256, 27.8228, 0.814163), (320, 26.7879, 0.6760), (384, 22.5696, 0.6682),
        (512, 20.1779, 0.5602),
    ],
}


def published_tables() -> dict[str, dict[Strategy, list[tuple[int, float, float]]]]:
    return {
        "regression": {Strategy.FULL_LOAD: REGRESSION_TABLE},
        "vanilla": VANILLA_TABLES,
        "portfolio": PORTFOLIO_TABLES,
    }


def recompute(rows: list[tuple[int, float, float]], strategy: Strategy) -> list[tuple[int, float, float, float]]:
    """Return ``(n_cpus, time, published, computed)`` for each published row."""
    records = [
        BenchRecord(n_cpus=n_cpus, strategy=strategy, wall_time=time, job_count=1, run_id=f"published-{n_cpus}")
        for n_cpus, time, _ in rows
    ]
    base = records[0]
    return [
        (n_cpus, time, published, speedup_ratio(base, record))
        for (n_cpus, time, published), record in zip(rows, records)
    ]


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="Recompute published speedup ratios from their timings.")
    parser.add_argument("--table", choices=["regression", "vanilla", "portfolio", "all"], default="all")
    parser.add_argument("--tolerance", type=float, default=TOLERANCE)
    args = parser.parse_args(argv)

    worst = 0.0
    for name, tables in published_tables().items():
        if args.table not in ("all", name):
            continue
        for strategy, rows in tables.items():
            print(f"{name} / {strategy.label}")
            print(f"{'cpus':>6} {'time':>12} {'published':>12} {'computed':>12} {'diff':>10}")
            for n_cpus, time, published, computed in recompute(rows, strategy):
                diff = abs(computed - published)
                worst = max(worst, diff)
                print(f"{n_cpus:>6} {time:>12.6g} {published:>12.6g} {computed:>12.6g} {diff:>10.2e}")
            print()
    print(f"Largest deviation: {worst:.2e} (tolerance {args.tolerance:.1e})")
    return 0 if worst <= args.tolerance else 1


if __name__ == "__main__":
    raise SystemExit(main())
