"""用户态平台层

提供内存区域、单调时钟和上下文切换三种基本机制，
调度逻辑和分配策略都建立在这些机制之上。
"""
import mmap
import time
import logging
from enum import Enum
from typing import Any, Callable, Dict, Optional

import numpy as np
import psutil
from greenlet import greenlet, getcurrent

from src.errors import BootError, SchedError

# 进程入口时间，作为 boot-to-main 计时起点
PROCESS_ENTRY_NS = time.monotonic_ns()

PAGE_SIZE = 4096
MIN_STACK_SIZE = 16 * 1024
DEFAULT_STACK_SIZE = 64 * 1024


def monotonic_ns() -> int:
    """单调时钟（纳秒）"""
    return time.monotonic_ns()


class MemoryStrategy(str, Enum):
    """堆内存准备策略"""

    PRERESERVED = "prereserved"
    ON_DEMAND = "on_demand"


class MemoryRegion:
    """平台提供的一段连续内存

    分配器以字节偏移量的形式引用其中的块。
    """

    def __init__(self, mapping: Any, size: int, strategy: MemoryStrategy):
        self.mapping = mapping
        self.size = size
        self.strategy = strategy
        self.view = memoryview(mapping)
        self.provision_ns = 0

    def __len__(self) -> int:
        return self.size

    def touch_pages(self) -> int:
        """每页写入一次，触发首次访问开销

        Returns:
            int: 耗时（纳秒）
        """
        start = monotonic_ns()
        pages = np.frombuffer(self.mapping, dtype=np.uint8)
        pages[::PAGE_SIZE] = 0
        del pages
        return monotonic_ns() - start

    def read(self, offset: int, length: int) -> bytes:
        return bytes(self.view[offset:offset + length])

    def write(self, offset: int, data: bytes) -> None:
        self.view[offset:offset + len(data)] = data

    def close(self) -> None:
        """释放映射；仍有导出视图时保留映射"""
        try:
            self.view.release()
            if isinstance(self.mapping, mmap.mmap):
                self.mapping.close()
        except BufferError:
            logging.getLogger(__name__).debug("内存区域仍被引用，延迟释放")


def _map_anonymous(nbytes: int) -> Any:
    if hasattr(mmap, "MAP_ANONYMOUS"):
        return mmap.mmap(-1, nbytes, flags=mmap.MAP_PRIVATE | mmap.MAP_ANONYMOUS)
    return mmap.mmap(-1, nbytes)


def provision_heap(strategy: str, nbytes: int) -> MemoryRegion:
    """准备堆内存区域

    prereserved 在返回前触碰每一页；on_demand 只保留地址空间，
    首次访问开销留到运行期。

    Args:
        strategy: prereserved 或 on_demand
        nbytes: 字节数

    Returns:
        MemoryRegion: 内存区域
    """
    logger = logging.getLogger(__name__)
    try:
        mode = MemoryStrategy(strategy)
    except ValueError:
        raise BootError(BootError.BAD_CONFIG, f"未知的内存策略: {strategy}")
    if nbytes <= 0:
        raise BootError(BootError.HEAP_UNAVAILABLE, f"堆大小必须大于0: {nbytes}")

    if mode is MemoryStrategy.PRERESERVED:
        available = psutil.virtual_memory().available
        if nbytes > available:
            raise BootError(
                BootError.HEAP_UNAVAILABLE,
                f"可用内存不足: 需要 {nbytes} 字节, 可用 {available} 字节",
            )

    start = monotonic_ns()
    try:
        mapping = _map_anonymous(nbytes)
    except (OSError, ValueError, OverflowError) as e:
        logger.error(f"堆内存映射失败: {e}")
        raise BootError(BootError.HEAP_UNAVAILABLE, f"堆内存映射失败: {e}")

    region = MemoryRegion(mapping, nbytes, mode)
    if mode is MemoryStrategy.PRERESERVED:
        region.touch_pages()
    region.provision_ns = monotonic_ns() - start
    logger.debug(f"堆内存就绪: {nbytes} 字节, 策略 {mode.value}, 耗时 {region.provision_ns}ns")
    return region


class PlatformContext:
    """可切换的执行上下文"""

    def __init__(self, entry: Callable[..., Any], stack_size: int, parent: Optional[greenlet] = None):
        self.stack_size = stack_size
        self.thread: Any = None
        self._greenlet = greenlet(entry, parent)
        self._greenlet.uk_context = self

    @property
    def dead(self) -> bool:
        return self._greenlet.dead

    def set_return_context(self, parent: greenlet) -> None:
        """入口返回后切回的上下文"""
        self._greenlet.parent = parent

    @property
    def started(self) -> bool:
        return bool(self._greenlet)

    def switch(self, *args: Any) -> Any:
        """切换到该上下文，对方切回时返回"""
        return self._greenlet.switch(*args)


def make_context(
    entry: Callable[..., Any],
    stack_size: int = DEFAULT_STACK_SIZE,
    parent: Optional[PlatformContext] = None,
) -> PlatformContext:
    """创建执行上下文

    Args:
        entry: 上下文入口函数
        stack_size: 栈大小（字节）
        parent: 入口返回后切回的上下文，默认当前上下文

    Returns:
        PlatformContext: 新上下文
    """
    if stack_size < MIN_STACK_SIZE:
        raise SchedError(SchedError.BAD_STACK, f"栈过小: {stack_size} < {MIN_STACK_SIZE}")
    return PlatformContext(entry, stack_size, parent._greenlet if parent else None)


def switch_context(ctx: PlatformContext, *args: Any) -> Any:
    """切换到目标上下文"""
    return ctx.switch(*args)


def boot_context() -> greenlet:
    """当前宿主执行上下文"""
    return getcurrent()


class Platform:
    """用户态平台"""

    def __init__(self, config: Optional[Dict[str, Any]] = None):
        """初始化平台

        Args:
            config: 配置信息，包含页大小和栈下限等
        """
        self.config = config or {}
        self.page_size = self.config.get("page_size", PAGE_SIZE)
        self.min_stack = self.config.get("min_stack", MIN_STACK_SIZE)
        self.entry_ns = PROCESS_ENTRY_NS
        self.initialized = False
        self.logger = logging.getLogger(__name__)

    def init(self) -> int:
        """平台初始化

        Returns:
            int: 耗时（纳秒）
        """
        start = monotonic_ns()
        # 确认时钟单调且上下文机制可用
        ctx = make_context(lambda: monotonic_ns(), max(self.min_stack, MIN_STACK_SIZE))
        t = ctx.switch()
        if t < start:
            raise BootError(BootError.BAD_CONFIG, "平台时钟不单调")
        self.initialized = True
        elapsed = monotonic_ns() - start
        self.logger.debug(f"平台初始化完成, 耗时 {elapsed}ns")
        return elapsed

    @staticmethod
    def monotonic_ns() -> int:
        return monotonic_ns()

    def provision_heap(self, strategy: str, nbytes: int) -> MemoryRegion:
        return provision_heap(strategy, nbytes)

    def make_context(self, entry: Callable[..., Any], stack_size: int = DEFAULT_STACK_SIZE) -> PlatformContext:
        if stack_size < self.min_stack:
            raise SchedError(SchedError.BAD_STACK, f"栈过小: {stack_size} < {self.min_stack}")
        return make_context(entry, stack_size)

    def switch_context(self, ctx: PlatformContext, *args: Any) -> Any:
        return switch_context(ctx, *args)
