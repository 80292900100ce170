APP_NAME = "riskbench"
APP_SLUG = "riskbench"
APP_VERSION = "0.1.0"

HOME_ENV = "RISKBENCH_HOME"
MASTER_ADDR_ENV = "RISKBENCH_MASTER_ADDR"
CONFIG_FILENAME = "config.json"
LOG_FILENAME = "riskbench.log"
LEDGER_FILENAME = "bench.sqlite3"
RESULTS_FILENAME = "pb-res.rbr"

DEFAULT_MASTER_ADDR = "127.0.0.1:5577"
DEFAULT_MAX_PAYLOAD = 64 * 1024 * 1024

PROBLEM_SUFFIX = ".rbp"
COMPRESSED_SUFFIX = ".rbz"
RESULTS_SUFFIX = ".rbr"

SPEC_MAGIC = b"RBP1"
RESULT_MAGIC = b"RBR1"
COMPRESSED_MAGIC = b"RBZ1"
BATCH_MAGIC = b"RBB1"
RESULTS_FILE_MAGIC = b"RBRS"
HELLO_MAGIC = b"RBW1"

FORMAT_VERSION = 1
PROTOCOL_VERSION = 1
