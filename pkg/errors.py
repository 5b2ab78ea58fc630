"""
오류 분류 모듈
모든 모듈이 공유하는 예외 계층과 CLI 종료 코드
"""


class LabError(Exception):
    """실험실 공통 예외 (종료 코드 1)"""

    exit_code = 1
    category = "오류"


# ===== 설정 =====

class ConfigError(LabError):
    """설정 파일/플래그 오류"""

    exit_code = 2
    category = "설정 오류"


# ===== 데이터 입출력 =====

class DataFormatError(LabError):
    """파일 형식 오류 (매직 넘버 등)"""

    exit_code = 3
    category = "형식 오류"


class ConsistencyError(DataFormatError):
    """이미지/라벨 개수 불일치 등"""

    category = "일관성 오류"


class ParseError(DataFormatError):
    """CSV 셀 파싱 실패"""

    category = "파싱 오류"


class SchemaError(DataFormatError):
    """필수 컬럼 누락"""

    category = "스키마 오류"


class TruncatedFileError(DataFormatError, OSError):
    """파일이 헤더가 선언한 길이보다 짧음"""

    category = "I/O 오류"


# ===== 인자/상태/수치 =====

class ArgumentError(LabError, ValueError):
    """함수 인자 범위 오류"""

    exit_code = 4
    category = "인자 오류"


class StateError(LabError):
    """잘못된 상태에서의 호출 (이중 오염, 빈 윈도우 등)"""

    exit_code = 5
    category = "상태 오류"


class ShapeError(LabError, ValueError):
    """행렬 차원 불일치"""

    exit_code = 6
    category = "차원 오류"


class NumericError(LabError, ArithmeticError):
    """NaN/Inf 입력"""

    exit_code = 6
    category = "수치 오류"


class RunError(LabError):
    """
    실행 중 발생한 모듈 오류를 에포크 문맥과 함께 감싼다.

    종료 코드는 원래 오류의 분류를 따른다.
    """

    category = "실행 오류"

    def __init__(self, message: str, cause: Exception = None, epoch: int = None):
        super().__init__(message)
        self.cause = cause
        self.epoch = epoch
        if isinstance(cause, LabError):
            self.exit_code = cause.exit_code
