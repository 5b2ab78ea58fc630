import logging
import os

from dotenv import load_dotenv

# 로컬 .env 파일이 있으면 환경변수로 먼저 로드
load_dotenv()


# 환경변수 우선, 없으면 기본값
def get_setting(key, default=None):
    value = os.getenv(key)
    if value is None or value.strip() == "":
        return default
    return value


# 실행 환경 설정
LOG_LEVEL = get_setting("PDIFF_LOG_LEVEL", "INFO")
OUTPUT_ROOT = get_setting("PDIFF_OUTPUT_ROOT", "runs")
MNIST_DIR = get_setting("PDIFF_MNIST_DIR")

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def configure_logging(level=None):
    """CLI 진입 시 한 번 호출 (라이브러리 import 시에는 설정하지 않음)"""
    level_name = (level or LOG_LEVEL).upper()
    logging.basicConfig(
        level=getattr(logging, level_name, logging.INFO),
        format=LOG_FORMAT,
    )


# 실험 기본값
DEFAULT_BINS = 200
DEFAULT_WINDOW_FRACTION = 0.2
DEFAULT_RAMP_EPOCHS = 20
DEFAULT_ZETA_THRESHOLD = 0.9
DEFAULT_EPOCHS = 200
DEFAULT_BATCH_SIZE = 128
DEFAULT_LEARNING_RATE = 0.001
DEFAULT_MOMENTUM = 0.9
DEFAULT_HIDDEN = (256,)
DEFAULT_TEST_FRACTION = 0.2
DEFAULT_SNAPSHOT_EPOCHS = (1, 2, 10)

# 로그 클램프 (p_y = 0 보호)
LOG_EPS = 1e-12

# 출력 파일 이름
METRICS_FILE = "metrics.jsonl"
TIMING_FILE = "timing.jsonl"
SUMMARY_FILE = "summary.json"
RESOLVED_CONFIG_FILE = "config.json"
INCOMPLETE_SUFFIX = ".incomplete"
