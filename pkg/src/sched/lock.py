"""uklock 同步原语

有调度器时，互斥锁和信号量在竞争时阻塞当前线程，释放时把所有权
直接交给最早的等待者。单线程组合下返回无状态的空实现。
"""
from collections import deque
from typing import Any, Deque, Dict, Optional, Union

from src.errors import SchedError
from src.sched.scheduler import Scheduler, Thread

_BOOT_OWNER = object()


class Mutex:
    """互斥锁"""

    def __init__(self, scheduler: Scheduler, debug: bool = False):
        self.scheduler = scheduler
        self.debug = debug
        self.owner: Any = None
        self.waiters: Deque[Thread] = deque()

    def __enter__(self) -> "Mutex":
        self.lock()
        return self

    def __exit__(self, *exc: Any) -> None:
        self.unlock()

    @property
    def locked(self) -> bool:
        return self.owner is not None

    def _caller(self) -> Any:
        return self.scheduler.current or _BOOT_OWNER

    def lock(self) -> None:
        caller = self._caller()
        if self.owner is None:
            self.owner = caller
            return
        if caller is _BOOT_OWNER:
            raise SchedError(SchedError.DEADLOCK, "调度器线程之外无法等待互斥锁")
        self.waiters.append(caller)
        # 醒来时所有权已经移交
        self.scheduler.thread_block()

    def unlock(self) -> None:
        if self.debug and self.owner is not self._caller():
            raise SchedError(SchedError.NOT_OWNER, "只有持有者可以解锁")
        if self.waiters:
            nxt = self.waiters.popleft()
            self.owner = nxt
            self.scheduler.wake(nxt)
        else:
            self.owner = None


class Semaphore:
    """计数信号量"""

    def __init__(self, scheduler: Scheduler, count: int = 0):
        if count < 0:
            raise SchedError(SchedError.BAD_COUNT, f"信号量初值不能为负: {count}")
        self.scheduler = scheduler
        self.count = count
        self.waiters: Deque[Thread] = deque()

    def down(self) -> None:
        if self.count > 0:
            self.count -= 1
            return
        thread = self.scheduler.current
        if thread is None:
            raise SchedError(SchedError.DEADLOCK, "调度器线程之外无法等待信号量")
        self.waiters.append(thread)
        self.scheduler.thread_block()

    def try_down(self) -> bool:
        if self.count > 0:
            self.count -= 1
            return True
        return False

    def up(self) -> None:
        if self.waiters:
            self.scheduler.wake(self.waiters.popleft())
        else:
            self.count += 1


class NullMutex:
    """单线程组合下的互斥锁"""

    __slots__ = ()

    def __enter__(self) -> "NullMutex":
        return self

    def __exit__(self, *exc: Any) -> None:
        pass

    def lock(self) -> None:
        pass

    def unlock(self) -> None:
        pass


class NullSemaphore:
    """单线程组合下的信号量"""

    __slots__ = ()

    def down(self) -> None:
        pass

    def try_down(self) -> bool:
        return True

    def up(self) -> None:
        pass


NULL_MUTEX = NullMutex()
NULL_SEMAPHORE = NullSemaphore()


def threading_enabled(config: Optional[Dict[str, Any]], scheduler: Optional[Scheduler]) -> bool:
    return scheduler is not None and (config or {}).get("threading", True)


def make_mutex(config: Optional[Dict[str, Any]] = None, scheduler: Optional[Scheduler] = None) -> Union[Mutex, NullMutex]:
    """按组合配置创建互斥锁"""
    if not threading_enabled(config, scheduler):
        return NULL_MUTEX
    return Mutex(scheduler, (config or {}).get("debug", False))


def make_semaphore(
    count: int = 0,
    config: Optional[Dict[str, Any]] = None,
    scheduler: Optional[Scheduler] = None,
) -> Union[Semaphore, NullSemaphore]:
    """按组合配置创建信号量"""
    if not threading_enabled(config, scheduler):
        return NULL_SEMAPHORE
    return Semaphore(scheduler, count)


def mutex_lock(m: Union[Mutex, NullMutex]) -> None:
    m.lock()


def mutex_unlock(m: Union[Mutex, NullMutex]) -> None:
    m.unlock()


def sem_up(s: Union[Semaphore, NullSemaphore]) -> None:
    s.up()


def sem_down(s: Union[Semaphore, NullSemaphore]) -> None:
    s.down()
