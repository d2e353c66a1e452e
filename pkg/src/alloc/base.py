"""分配器公共定义

每个后端实现同一组操作，句柄把一段堆区域和一个后端绑定在一起，
并在外层维护统计信息。块引用是内存区域内的字节偏移量。
"""
import json
import logging
import struct
from abc import ABC, abstractmethod
from dataclasses import dataclass, asdict
from enum import Enum
from typing import Any, Dict, Optional

from src.errors import AllocError

MIN_ALIGN = 16
TAG_SIZE = 16

# 边界标签魔数
USED_MAGIC = 0x55534544
FREE_MAGIC = 0x46524545
REGION_MAGIC = 0x52474E31

# 标签布局: 魔数(u32) + 辅助字段(u32) + 大小(u64)
TAG = struct.Struct("<IIQ")


def align_up(value: int, align: int) -> int:
    return (value + align - 1) & ~(align - 1)


def align_down(value: int, align: int) -> int:
    return value & ~(align - 1)


def is_power_of_two(value: int) -> bool:
    return value > 0 and (value & (value - 1)) == 0


def round_request(size: int) -> int:
    """请求大小向上取整到16字节"""
    return align_up(max(size, MIN_ALIGN), MIN_ALIGN)


class BackendKind(str, Enum):
    """分配器后端种类"""

    BUDDY = "buddy"
    TLSF = "tlsf"
    REGION = "region"
    TINYFREE = "tinyfree"


@dataclass
class AllocStats:
    """分配统计"""

    alloc_count: int = 0
    free_count: int = 0
    bytes_in_use: int = 0
    peak_bytes: int = 0
    init_ns: int = 0


class AllocatorBackend(ABC):
    """分配器后端接口"""

    kind: BackendKind

    def __init__(self, view: memoryview, base: int, length: int, config: Dict[str, Any], debug: bool):
        """初始化后端状态（不做初始化工作，见 init）

        Args:
            view: 内存区域视图
            base: 堆起始偏移
            length: 堆长度
            config: 后端配置
            debug: 是否启用调试检查
        """
        self.view = view
        self.base = base
        self.length = length
        self.end = base + length
        self.config = config
        self.debug = debug

    @abstractmethod
    def init(self) -> None:
        """初始化堆，返回后即可服务请求"""

    @abstractmethod
    def allocate(self, size: int) -> int:
        """分配至少 size 字节"""

    @abstractmethod
    def allocate_aligned(self, align: int, size: int) -> int:
        """按 align 对齐分配"""

    @abstractmethod
    def release(self, block: int) -> int:
        """释放块，返回释放的可用字节数"""

    @abstractmethod
    def usable_size(self, block: int) -> int:
        """块的可用字节数"""

    @abstractmethod
    def available_bytes(self) -> int:
        """剩余可分配字节数"""

    @abstractmethod
    def watermark(self) -> int:
        """已分配存活块的最高结束偏移"""

    def try_resize(self, block: int, new_size: int) -> bool:
        """尝试原地扩展"""
        return False

    def _foreign(self, block: int) -> AllocError:
        return AllocError(AllocError.FOREIGN_BLOCK, f"块 {block:#x} 不属于该分配器")

    def _double(self, block: int) -> AllocError:
        return AllocError(AllocError.DOUBLE_RELEASE, f"块 {block:#x} 重复释放")


class AllocatorHandle:
    """分配器句柄

    绑定堆区域与后端操作集，对外提供 POSIX 风格的分配接口。
    句柄由单一所有者使用，内部不加锁。
    """

    def __init__(
        self,
        backend_kind: BackendKind,
        heap_base: int,
        heap_len: int,
        ops: AllocatorBackend,
        region: Any,
        debug: bool = False,
    ):
        self.backend_kind = backend_kind
        self.heap_base = heap_base
        self.heap_len = heap_len
        self.ops = ops
        self.region = region
        self.debug = debug
        self.stats = AllocStats()
        self.retired = False
        self.logger = logging.getLogger(__name__)

    def __repr__(self) -> str:
        return f"AllocatorHandle({self.backend_kind.value}, base={self.heap_base:#x}, len={self.heap_len})"

    def _check_active(self) -> None:
        if self.retired:
            raise AllocError(AllocError.HANDLE_RETIRED, "分配器已退役")

    def _account_alloc(self, block: int) -> int:
        stats = self.stats
        stats.alloc_count += 1
        stats.bytes_in_use += self.ops.usable_size(block)
        if stats.bytes_in_use > stats.peak_bytes:
            stats.peak_bytes = stats.bytes_in_use
        return block

    def allocate(self, size: int) -> int:
        """分配内存块

        Args:
            size: 请求字节数，必须大于0

        Returns:
            int: 块偏移（至少16字节对齐）
        """
        if size <= 0:
            raise AllocError(AllocError.INVALID_SIZE, f"请求大小必须大于0: {size}")
        self._check_active()
        return self._account_alloc(self.ops.allocate(size))

    def allocate_zeroed(self, size: int) -> int:
        """分配并清零"""
        block = self.allocate(size)
        usable = self.ops.usable_size(block)
        self.region.view[block:block + usable] = bytes(usable)
        return block

    def allocate_aligned(self, align: int, size: int) -> int:
        """按给定对齐分配

        Args:
            align: 对齐字节数，必须是不小于16的2的幂
            size: 请求字节数

        Returns:
            int: 块偏移，满足 offset % align == 0
        """
        if not is_power_of_two(align) or align < MIN_ALIGN:
            raise AllocError(AllocError.INVALID_ALIGNMENT, f"非法对齐: {align}")
        if size <= 0:
            raise AllocError(AllocError.INVALID_SIZE, f"请求大小必须大于0: {size}")
        self._check_active()
        return self._account_alloc(self.ops.allocate_aligned(align, size))

    def release(self, block: Optional[int]) -> None:
        """释放内存块；None 视为空操作"""
        if block is None:
            return
        self._check_active()
        if self.debug and not (self.heap_base <= block < self.heap_base + self.heap_len):
            raise AllocError(AllocError.FOREIGN_BLOCK, f"块 {block:#x} 不在堆区域内")
        freed = self.ops.release(block)
        self.stats.free_count += 1
        self.stats.bytes_in_use -= freed

    def reallocate(self, block: Optional[int], new_size: int) -> Optional[int]:
        """调整块大小，保留前 min(旧可用大小, new_size) 字节

        Args:
            block: 原块，None 等价于 allocate
            new_size: 新大小；为0时释放原块并返回 None

        Returns:
            Optional[int]: 新块偏移
        """
        if block is None:
            return self.allocate(new_size)
        if new_size <= 0:
            self.release(block)
            return None
        self._check_active()
        old = self.ops.usable_size(block)
        if new_size <= old:
            return block
        if self.ops.try_resize(block, new_size):
            grown = self.ops.usable_size(block)
            self.stats.bytes_in_use += grown - old
            if self.stats.bytes_in_use > self.stats.peak_bytes:
                self.stats.peak_bytes = self.stats.bytes_in_use
            return block
        # 失败时原块保持存活
        new_block = self.allocate(new_size)
        view = self.region.view
        view[new_block:new_block + old] = view[block:block + old]
        self.release(block)
        return new_block

    def usable_size(self, block: int) -> int:
        return self.ops.usable_size(block)

    def available_bytes(self) -> int:
        return self.ops.available_bytes()

    def watermark(self) -> int:
        return self.ops.watermark()

    def buffer(self, block: int, length: Optional[int] = None) -> memoryview:
        """块内容视图"""
        if length is None:
            length = self.ops.usable_size(block)
        return self.region.view[block:block + length]

    def retire(self, watermark: Optional[int] = None) -> int:
        """冻结句柄，堆区域收缩到水位线

        Args:
            watermark: 水位线，默认取后端当前水位

        Returns:
            int: 新的堆结束偏移
        """
        mark = self.ops.watermark() if watermark is None else watermark
        self.heap_len = max(0, mark - self.heap_base)
        self.retired = True
        self.logger.debug(f"分配器退役: {self!r}")
        return self.heap_base + self.heap_len

    def stats_dict(self) -> Dict[str, Any]:
        data = asdict(self.stats)
        return {
            "backend": self.backend_kind.value,
            "heap_len": self.heap_len,
            "alloc_count": data["alloc_count"],
            "free_count": data["free_count"],
            "bytes_in_use": data["bytes_in_use"],
            "peak_bytes": data["peak_bytes"],
            "init_ns": data["init_ns"],
        }

    def stats_json(self) -> str:
        """统计信息 JSON"""
        return json.dumps(self.stats_dict())
