"""协作式调度器

建立在平台上下文切换之上。每个调度器在调用 run 的宿主上下文里
运行分派循环；线程主动让出、阻塞或退出时切回分派循环，
由它按 FIFO 取出下一个就绪线程。多个调度器可以并存，互不共享线程。
"""
import logging
from collections import deque
from enum import Enum
from typing import Any, Callable, Deque, Dict, List, Optional

from greenlet import getcurrent

from src.boot.platform import DEFAULT_STACK_SIZE, Platform, PlatformContext
from src.errors import SchedError

BOOT_CONTEXT_ID = 0


class ThreadState(str, Enum):
    READY = "ready"
    RUNNING = "running"
    BLOCKED = "blocked"
    EXITED = "exited"


class SwitchReason(str, Enum):
    YIELD = "yield"
    BLOCK = "block"
    WAKE = "wake"
    EXIT = "exit"


class Thread:
    """调度器线程"""

    def __init__(self, tid: int, entry: Callable[[Any], Any], arg: Any, stack_size: int, owner: "Scheduler"):
        self.id = tid
        self.entry = entry
        self.arg = arg
        self.stack_size = stack_size
        self.owner = owner
        self.state = ThreadState.READY
        self.result: Any = None
        self.context: Optional[PlatformContext] = None

    def __repr__(self) -> str:
        return f"Thread({self.id}, {self.state.value})"


class Scheduler:
    """协作式 FIFO 调度器"""

    policy = "cooperative"

    def __init__(self, platform: Platform, config: Optional[Dict[str, Any]] = None):
        """初始化调度器

        Args:
            platform: 已初始化的平台
            config: sched 配置段，包含默认栈大小和是否记录切换轨迹
        """
        self.platform = platform
        self.config = config or {}
        self.default_stack = self.config.get("stack_size", DEFAULT_STACK_SIZE)
        self.record_trace = self.config.get("trace", True)
        self.threads: Dict[int, Thread] = {}
        self.run_queue: Deque[Thread] = deque()
        self.current: Optional[Thread] = None
        self.trace: List[str] = []
        self.switch_count = 0
        self._next_id = 1
        self._home = None
        self.logger = logging.getLogger(__name__)

    def __repr__(self) -> str:
        return f"Scheduler(threads={len(self.threads)}, ready={len(self.run_queue)})"

    @property
    def running(self) -> bool:
        return self._home is not None

    def _record(self, from_id: int, to_id: int, reason: SwitchReason) -> None:
        self.switch_count += 1
        if self.record_trace:
            self.trace.append(f"switch {from_id} -> {to_id} reason={reason.value}")

    def dump_trace(self) -> str:
        return "\n".join(self.trace)

    # ---- 线程生命周期 ----

    def thread_create(self, entry: Callable[[Any], Any], arg: Any = None, stack_size: Optional[int] = None) -> Thread:
        """创建就绪线程，排到运行队列尾部

        Args:
            entry: 线程入口，以 arg 为唯一参数
            arg: 入口参数
            stack_size: 栈大小，低于平台下限时报 bad_stack
        """
        stack_size = self.default_stack if stack_size is None else stack_size
        thread = Thread(self._next_id, entry, arg, stack_size, self)

        def bootstrap() -> SwitchReason:
            thread.result = thread.entry(thread.arg)
            thread.state = ThreadState.EXITED
            return SwitchReason.EXIT

        thread.context = self.platform.make_context(bootstrap, stack_size)
        thread.context.thread = thread
        self._next_id += 1
        self.threads[thread.id] = thread
        self.run_queue.append(thread)
        return thread

    def _require_current(self) -> Thread:
        thread = self.current
        if thread is None or getattr(getcurrent(), "uk_context", None) is not thread.context:
            raise SchedError(SchedError.NO_CURRENT_THREAD, "只能在本调度器的线程中调用")
        return thread

    def thread_yield(self) -> None:
        """当前线程让出，排到运行队列尾部"""
        thread = self._require_current()
        thread.state = ThreadState.READY
        self.run_queue.append(thread)
        self._home.switch(SwitchReason.YIELD)

    def thread_block(self) -> None:
        """当前线程阻塞，直到被 wake"""
        thread = self._require_current()
        thread.state = ThreadState.BLOCKED
        self._home.switch(SwitchReason.BLOCK)

    def wake(self, thread: Thread) -> None:
        """唤醒阻塞线程，排到运行队列尾部（不立即切换）"""
        if thread.owner is not self:
            raise SchedError(SchedError.FOREIGN_THREAD, f"{thread!r} 不属于该调度器")
        if thread.state is not ThreadState.BLOCKED:
            raise SchedError(SchedError.NOT_BLOCKED, f"{thread!r} 未阻塞")
        thread.state = ThreadState.READY
        self.run_queue.append(thread)

    # ---- 分派循环 ----

    def run(self) -> None:
        """按 FIFO 运行线程，直到全部退出

        运行队列为空而仍有阻塞线程时报告死锁。
        """
        if self._home is not None:
            raise SchedError(SchedError.DEADLOCK, "调度器已在运行")
        self._home = getcurrent()
        prev_id, reason = BOOT_CONTEXT_ID, SwitchReason.WAKE
        try:
            while self.run_queue:
                thread = self.run_queue.popleft()
                if thread.id != prev_id:
                    self._record(prev_id, thread.id, reason)
                thread.state = ThreadState.RUNNING
                self.current = thread
                thread.context.set_return_context(self._home)
                try:
                    reason = thread.context.switch()
                except Exception as e:
                    thread.state = ThreadState.EXITED
                    self.logger.error(f"{thread!r} 异常退出: {e}")
                    raise
                finally:
                    self.current = None
                prev_id = thread.id
                if reason is SwitchReason.EXIT:
                    del self.threads[thread.id]
            if prev_id != BOOT_CONTEXT_ID:
                self._record(prev_id, BOOT_CONTEXT_ID, reason)
        finally:
            self._home = None

        blocked = [t.id for t in self.threads.values() if t.state is ThreadState.BLOCKED]
        if blocked:
            self.logger.error(f"死锁: 运行队列为空, 阻塞线程 {blocked}")
            raise SchedError(SchedError.DEADLOCK, f"运行队列为空而线程 {blocked} 仍在阻塞", blocked=blocked)


def sched_create(platform: Platform, config: Optional[Dict[str, Any]] = None) -> Scheduler:
    """创建调度器"""
    if not platform.initialized:
        platform.init()
    return Scheduler(platform, config)


def thread_create(s: Scheduler, entry: Callable[[Any], Any], arg: Any = None, stack_size: Optional[int] = None) -> Thread:
    return s.thread_create(entry, arg, stack_size)


def sched_run(s: Scheduler) -> None:
    s.run()


def current_thread() -> Thread:
    """调用者所在的调度器线程"""
    ctx = getattr(getcurrent(), "uk_context", None)
    thread = getattr(ctx, "thread", None)
    if thread is None:
        raise SchedError(SchedError.NO_CURRENT_THREAD, "当前不在调度器线程中")
    return thread


def thread_yield() -> None:
    current_thread().owner.thread_yield()


def thread_block() -> None:
    current_thread().owner.thread_block()


def wake(thread: Thread, scheduler: Optional[Scheduler] = None) -> None:
    (scheduler or thread.owner).wake(thread)
