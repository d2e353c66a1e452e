"""ukalloc 分配门面

多个分配器可以同时存在，各自绑定一段堆区域，按注册顺序记录在
注册表中；不显式指定句柄的调用走默认分配器。
"""
import logging
from typing import Any, Dict, List, Optional, Type

from src.alloc.base import AllocatorBackend, AllocatorHandle, BackendKind
from src.alloc.buddy import BuddyAllocator
from src.alloc.region import RegionAllocator
from src.alloc.tinyfree import TinyFreeAllocator
from src.alloc.tlsf import TlsfAllocator
from src.boot.platform import MemoryRegion, monotonic_ns, provision_heap
from src.errors import AllocError

logger = logging.getLogger(__name__)

BACKENDS: Dict[BackendKind, Type[AllocatorBackend]] = {
    BackendKind.BUDDY: BuddyAllocator,
    BackendKind.TLSF: TlsfAllocator,
    BackendKind.REGION: RegionAllocator,
    BackendKind.TINYFREE: TinyFreeAllocator,
}


def backend_kind(name: Any) -> BackendKind:
    """解析后端名称"""
    try:
        return BackendKind(name)
    except ValueError:
        raise AllocError(AllocError.UNKNOWN_BACKEND, f"未知的分配器后端: {name}")


class AllocatorRegistry:
    """分配器注册表"""

    def __init__(self):
        self.handles: List[AllocatorHandle] = []
        self._default: Optional[AllocatorHandle] = None

    def __len__(self) -> int:
        return len(self.handles)

    def __contains__(self, handle: AllocatorHandle) -> bool:
        return any(h is handle for h in self.handles)

    def register(self, handle: AllocatorHandle) -> None:
        """注册句柄，同一内存区域内的堆范围不得重叠"""
        lo, hi = handle.heap_base, handle.heap_base + handle.heap_len
        for other in self.handles:
            if other.region is not handle.region:
                continue
            o_lo, o_hi = other.heap_base, other.heap_base + other.heap_len
            if lo < o_hi and o_lo < hi:
                raise AllocError(
                    AllocError.REGION_OVERLAP,
                    f"堆区域 [{lo:#x}, {hi:#x}) 与已注册分配器 {other!r} 重叠",
                )
        self.handles.append(handle)

    def check_free(self, region: Any, base: int, length: int) -> None:
        """初始化前检查区域是否空闲"""
        for other in self.handles:
            if other.region is region and base < other.heap_base + other.heap_len and other.heap_base < base + length:
                raise AllocError(
                    AllocError.REGION_OVERLAP,
                    f"堆区域 [{base:#x}, {base + length:#x}) 与已注册分配器 {other!r} 重叠",
                )

    def set_default(self, handle: AllocatorHandle) -> None:
        if handle not in self:
            raise AllocError(AllocError.NOT_REGISTERED, f"分配器未注册: {handle!r}")
        self._default = handle

    def default(self) -> Optional[AllocatorHandle]:
        if self._default is not None:
            return self._default
        return self.handles[0] if self.handles else None


_registry = AllocatorRegistry()


def get_registry() -> AllocatorRegistry:
    return _registry


def reset_registry() -> AllocatorRegistry:
    """替换进程级注册表（每次启动一个新的）"""
    global _registry
    _registry = AllocatorRegistry()
    return _registry


def alloc_init(
    backend: Any,
    base: int,
    length: int,
    region: Optional[MemoryRegion] = None,
    *,
    config: Optional[Dict[str, Any]] = None,
    debug: Optional[bool] = None,
    registry: Optional[AllocatorRegistry] = None,
) -> AllocatorHandle:
    """在 [base, base+length) 上初始化分配器并注册

    Args:
        backend: 后端种类
        base: 堆起始偏移
        length: 堆长度
        region: 所在内存区域，缺省时按需映射一段新区域
        config: alloc 配置段
        debug: 是否启用调试检查，缺省取配置中的 debug
        registry: 注册表，缺省使用进程级注册表

    Returns:
        AllocatorHandle: 可立即使用的句柄
    """
    kind = backend_kind(backend)
    config = config or {}
    registry = registry if registry is not None else _registry
    debug = config.get("debug", False) if debug is None else debug
    if length <= 0:
        raise AllocError(AllocError.REGION_TOO_SMALL, f"堆长度必须大于0: {length}")
    if region is None:
        region = provision_heap("on_demand", base + length)
    elif base < 0 or base + length > region.size:
        raise AllocError(AllocError.REGION_TOO_SMALL, f"堆范围超出内存区域: [{base:#x}, {base + length:#x})")
    registry.check_free(region, base, length)

    ops = BACKENDS[kind](region.view, base, length, config.get(kind.value, {}), debug)
    start = monotonic_ns()
    try:
        ops.init()
    except AllocError as e:
        logger.error(f"{kind.value} 分配器初始化失败: {e}")
        raise
    elapsed = monotonic_ns() - start

    handle = AllocatorHandle(kind, base, length, ops, region, debug)
    handle.stats.init_ns = elapsed
    registry.register(handle)
    logger.debug(f"分配器就绪: {handle!r}, 初始化耗时 {elapsed}ns")
    return handle


def set_default_allocator(handle: AllocatorHandle, registry: Optional[AllocatorRegistry] = None) -> None:
    (registry if registry is not None else _registry).set_default(handle)


def default_allocator(registry: Optional[AllocatorRegistry] = None) -> AllocatorHandle:
    handle = (registry if registry is not None else _registry).default()
    if handle is None:
        raise AllocError(AllocError.NOT_REGISTERED, "没有已注册的分配器")
    return handle


# POSIX 风格接口


def malloc(size: int, handle: Optional[AllocatorHandle] = None) -> int:
    return (handle or default_allocator()).allocate(size)


def calloc(count: int, size: int, handle: Optional[AllocatorHandle] = None) -> int:
    return (handle or default_allocator()).allocate_zeroed(count * size)


def memalign(align: int, size: int, handle: Optional[AllocatorHandle] = None) -> int:
    return (handle or default_allocator()).allocate_aligned(align, size)


def realloc(block: Optional[int], size: int, handle: Optional[AllocatorHandle] = None) -> Optional[int]:
    return (handle or default_allocator()).reallocate(block, size)


def free(block: Optional[int], handle: Optional[AllocatorHandle] = None) -> None:
    (handle or default_allocator()).release(block)
