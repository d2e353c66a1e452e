"""错误定义模块

各微库共用的异常层次。每个异常带有机器可读的 ``code``，
测试和系统调用层都按 ``code`` 判断错误种类。
"""
import errno
from typing import Any, Dict, List, Optional


class UkError(Exception):
    """所有微库错误的基类"""

    def __init__(self, code: str, message: str = "", **details: Any):
        """初始化错误

        Args:
            code: 错误码，例如 ``region_too_small``
            message: 人类可读的描述
            **details: 附加信息（候选项、环路等）
        """
        self.code = code
        self.message = message or code
        self.details: Dict[str, Any] = details
        super().__init__(f"[{code}] {self.message}")

    @property
    def errno(self) -> int:
        """对应的宿主 errno 值"""
        return _ERRNO_MAP.get(self.code, errno.EIO)


class AllocError(UkError):
    """内存分配错误"""

    REGION_TOO_SMALL = "region_too_small"
    REGION_OVERLAP = "region_overlap"
    OUT_OF_MEMORY = "out_of_memory"
    INVALID_ALIGNMENT = "invalid_alignment"
    INVALID_SIZE = "invalid_size"
    DOUBLE_RELEASE = "double_release"
    FOREIGN_BLOCK = "foreign_block"
    NOT_REGISTERED = "not_registered"
    HANDLE_RETIRED = "handle_retired"
    UNKNOWN_BACKEND = "unknown_backend"


class NetdevError(UkError):
    """网络设备错误"""

    TOO_MANY_QUEUES = "too_many_queues"
    WRONG_STATE = "wrong_state"
    BAD_CAPACITY = "bad_capacity"
    BAD_QUEUE_ID = "bad_queue_id"
    OUT_OF_MEMORY = "out_of_memory"
    REENTRANT_CALL = "reentrant_call"
    BUFFER_IN_FLIGHT = "buffer_in_flight"
    BAD_ENDPOINT = "bad_endpoint"


class SchedError(UkError):
    """调度器错误"""

    FOREIGN_THREAD = "foreign_thread"
    NOT_BLOCKED = "not_blocked"
    BAD_STACK = "bad_stack"
    DEADLOCK = "deadlock"
    NOT_OWNER = "not_owner"
    NO_CURRENT_THREAD = "no_current_thread"
    BAD_COUNT = "bad_count"


class FsError(UkError):
    """文件系统错误"""

    NOT_FOUND = "not_found"
    IS_DIRECTORY = "is_directory"
    NOT_DIRECTORY = "not_directory"
    READ_ONLY_FS = "read_only_fs"
    BAD_HANDLE = "bad_handle"
    BAD_PATH = "bad_path"
    EXISTS = "exists"
    DUPLICATE_NAME = "duplicate_name"
    BAD_IMAGE = "bad_image"
    BUSY = "busy"
    INVALID = "invalid"


class SyscallError(UkError):
    """系统调用层错误"""

    OUT_OF_RANGE = "out_of_range"
    ALREADY_REGISTERED = "already_registered"
    BAD_ADDRESS = "bad_address"


class BootError(UkError):
    """启动流程错误"""

    HEAP_UNAVAILABLE = "heap_unavailable"
    BAD_CONFIG = "bad_config"


class ComposerError(UkError):
    """组合器错误"""

    PARSE_ERROR = "parse_error"
    DUPLICATE_LIBRARY = "duplicate_library"
    UNSATISFIED_DEPENDENCY = "unsatisfied_dependency"
    AMBIGUOUS_PROVIDER = "ambiguous_provider"
    DEPENDENCY_CYCLE = "dependency_cycle"
    UNKNOWN_LIBRARY = "unknown_library"

    @property
    def candidates(self) -> List[str]:
        return list(self.details.get("candidates", []))

    @property
    def cycle(self) -> List[str]:
        return list(self.details.get("cycle", []))

    @property
    def line(self) -> Optional[int]:
        return self.details.get("line")

    @property
    def column(self) -> Optional[int]:
        return self.details.get("column")


class BenchError(UkError):
    """基准测试错误"""

    BAD_PARAMS = "bad_params"
    MISMATCH = "mismatch"
    MALFORMED = "malformed"


_ERRNO_MAP: Dict[str, int] = {
    FsError.NOT_FOUND: errno.ENOENT,
    FsError.IS_DIRECTORY: errno.EISDIR,
    FsError.NOT_DIRECTORY: errno.ENOTDIR,
    FsError.READ_ONLY_FS: errno.EROFS,
    FsError.BAD_HANDLE: errno.EBADF,
    FsError.BAD_PATH: errno.EINVAL,
    FsError.EXISTS: errno.EEXIST,
    FsError.BUSY: errno.EBUSY,
    FsError.INVALID: errno.EINVAL,
    SyscallError.BAD_ADDRESS: errno.EFAULT,
    AllocError.OUT_OF_MEMORY: errno.ENOMEM,
    NetdevError.OUT_OF_MEMORY: errno.ENOMEM,
    NetdevError.WRONG_STATE: errno.ENETDOWN,
    NetdevError.BAD_QUEUE_ID: errno.EINVAL,
}
