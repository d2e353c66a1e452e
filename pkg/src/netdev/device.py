"""uknetdev 设备接口

设备与驱动解耦：应用配置设备和队列、持有缓冲区，驱动后端只负责
把缓冲区放上或取下队列。突发收发返回实际处理的个数和队列状态标志；
中断模式下，队列在报告“无事可做”时武装，对端产生边沿时回调一次。
"""
import logging
from abc import ABC, abstractmethod
from enum import Enum, Flag
from typing import Any, Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

from src.alloc.base import AllocatorHandle, is_power_of_two
from src.errors import NetdevError
from src.netdev.netbuf import NetBuf

DEFAULT_QUEUE_CAPACITY = 256
DEFAULT_MAX_BURST = 64
DEFAULT_MAX_QUEUES = 4

QueueCallback = Callable[["NetDevice", "Direction", int], None]


class BurstStatus(Flag):
    """突发收发后的队列状态"""

    MORE_ROOM = 1
    FULL = 2
    MORE_PKTS = 4
    EMPTY = 8


class BurstResult(NamedTuple):
    status: BurstStatus
    count: int


class DeviceState(str, Enum):
    UNCONFIGURED = "unconfigured"
    CONFIGURED = "configured"
    RUNNING = "running"


class Direction(str, Enum):
    TX = "tx"
    RX = "rx"


class QueueMode(str, Enum):
    POLLING = "polling"
    INTERRUPT = "interrupt"


class DeviceInfo(NamedTuple):
    max_queues: int
    max_burst: int


class CallbackGuard:
    """回调执行标志，同一链路上的设备共享"""

    __slots__ = ("active",)

    def __init__(self):
        self.active = False


class NetQueue:
    """设备队列"""

    def __init__(self, device: "NetDevice", direction: Direction, qid: int):
        self.device = device
        self.direction = direction
        self.qid = qid
        self.configured = False
        self.capacity = 0
        self.alloc: Optional[AllocatorHandle] = None
        self.callback: Optional[QueueCallback] = None
        self.mode = QueueMode.POLLING
        self.armed = False
        self.notifications = 0

    def __repr__(self) -> str:
        return f"NetQueue({self.device.name}.{self.direction.value}{self.qid}, {self.mode.value}, armed={self.armed})"

    def arm(self) -> None:
        if self.mode is QueueMode.INTERRUPT:
            self.armed = True

    def notify(self) -> None:
        """对端边沿：已武装时回调一次并解除武装"""
        if not self.armed:
            return
        self.armed = False
        self.notifications += 1
        if self.callback is None:
            return
        guard = self.device.guard
        guard.active = True
        try:
            self.callback(self.device, self.direction, self.qid)
        finally:
            guard.active = False


class NetDevice(ABC):
    """网络设备

    子类实现 _xmit/_recv，把缓冲区交给具体后端。
    """

    backend = ""

    def __init__(self, name: str = "netdev", config: Optional[Dict[str, Any]] = None, guard: Optional[CallbackGuard] = None):
        """初始化设备

        Args:
            name: 设备名称
            config: netdev 配置段
            guard: 回调标志，缺省时设备独占一个
        """
        self.name = name
        self.config = config or {}
        self.info = DeviceInfo(
            max_queues=self.config.get("max_queues", DEFAULT_MAX_QUEUES),
            max_burst=self.config.get("max_burst", DEFAULT_MAX_BURST),
        )
        self.default_capacity = self.config.get("queue_capacity", DEFAULT_QUEUE_CAPACITY)
        self.debug = self.config.get("debug", False)
        self.state = DeviceState.UNCONFIGURED
        self.tx_queues: List[NetQueue] = []
        self.rx_queues: List[NetQueue] = []
        self.guard = guard or CallbackGuard()
        self.logger = logging.getLogger(__name__)

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.name}, {self.state.value})"

    # ---- 配置 ----

    def configure(self, num_tx_queues: int, num_rx_queues: int) -> None:
        """设置队列个数，unconfigured -> configured"""
        if self.state is not DeviceState.UNCONFIGURED:
            raise NetdevError(NetdevError.WRONG_STATE, f"{self.name} 已配置 ({self.state.value})")
        for count in (num_tx_queues, num_rx_queues):
            if count < 0 or count > self.info.max_queues:
                raise NetdevError(
                    NetdevError.TOO_MANY_QUEUES,
                    f"{self.name} 队列数 {count} 超出上限 {self.info.max_queues}",
                )
        self.tx_queues = [NetQueue(self, Direction.TX, q) for q in range(num_tx_queues)]
        self.rx_queues = [NetQueue(self, Direction.RX, q) for q in range(num_rx_queues)]
        self.state = DeviceState.CONFIGURED
        self.logger.debug(f"{self.name} 已配置: tx={num_tx_queues}, rx={num_rx_queues}")

    def _queues(self, direction: Any) -> List[NetQueue]:
        return self.tx_queues if Direction(direction) is Direction.TX else self.rx_queues

    def queue(self, direction: Any, qid: int) -> NetQueue:
        queues = self._queues(direction)
        if not 0 <= qid < len(queues):
            raise NetdevError(NetdevError.BAD_QUEUE_ID, f"{self.name} 没有 {Direction(direction).value} 队列 {qid}")
        return queues[qid]

    def queue_configure(
        self,
        direction: Any,
        qid: int,
        capacity: Optional[int] = None,
        alloc: Optional[AllocatorHandle] = None,
        callback: Optional[QueueCallback] = None,
    ) -> NetQueue:
        """配置单个队列，模式默认为轮询

        Args:
            direction: tx 或 rx
            qid: 队列号
            capacity: 环容量，必须是2的幂
            alloc: 接收缓冲区的分配器
            callback: 中断模式下的回调
        """
        if self.state is DeviceState.UNCONFIGURED:
            raise NetdevError(NetdevError.WRONG_STATE, f"{self.name} 尚未配置")
        queue = self.queue(direction, qid)
        capacity = self.default_capacity if capacity is None else capacity
        if not is_power_of_two(capacity):
            raise NetdevError(NetdevError.BAD_CAPACITY, f"队列容量必须是2的幂: {capacity}")
        queue.capacity = capacity
        queue.alloc = alloc
        queue.callback = callback
        queue.mode = QueueMode.POLLING
        queue.armed = False
        queue.configured = True
        self._on_queue_configured(queue)
        return queue

    def start(self) -> None:
        """configured -> running"""
        if self.state is not DeviceState.CONFIGURED:
            raise NetdevError(NetdevError.WRONG_STATE, f"{self.name} 无法启动 ({self.state.value})")
        self._on_start()
        self.state = DeviceState.RUNNING
        self.logger.info(f"{self.name} 已启动 ({self.backend})")

    def queue_intr_enable(self, direction: Any, qid: int, on: bool) -> None:
        """切换队列的中断/轮询模式；切回轮询时解除武装"""
        queue = self.queue(direction, qid)
        if not queue.configured:
            raise NetdevError(NetdevError.BAD_QUEUE_ID, f"{queue!r} 尚未配置")
        queue.mode = QueueMode.INTERRUPT if on else QueueMode.POLLING
        if not on:
            queue.armed = False

    # ---- 突发收发 ----

    def _running_queue(self, queues: List[NetQueue], qid: int) -> NetQueue:
        if self.guard.active:
            raise NetdevError(NetdevError.REENTRANT_CALL, "回调中不能调用突发收发")
        if self.state is not DeviceState.RUNNING:
            raise NetdevError(NetdevError.WRONG_STATE, f"{self.name} 未运行 ({self.state.value})")
        if not 0 <= qid < len(queues) or not queues[qid].configured:
            raise NetdevError(NetdevError.BAD_QUEUE_ID, f"{self.name} 队列 {qid} 不可用")
        return queues[qid]

    def tx_burst(self, qid: int, pkts: Sequence[NetBuf], cnt: Optional[int] = None) -> BurstResult:
        """发送 pkts 的前 cnt 个缓冲区

        Returns:
            BurstResult: 实际入队个数和 MORE_ROOM/FULL 标志
        """
        queue = self._running_queue(self.tx_queues, qid)
        if cnt is None or cnt > len(pkts):
            cnt = len(pkts)
        accepted, full = self._xmit(queue, pkts, cnt)
        if full:
            queue.arm()
            return BurstResult(BurstStatus.FULL, accepted)
        return BurstResult(BurstStatus.MORE_ROOM, accepted)

    def rx_burst(self, qid: int, pkts: List[NetBuf], cnt: Optional[int] = None) -> BurstResult:
        """接收至多 cnt 个缓冲区，结果覆盖写入 pkts

        Returns:
            BurstResult: 实际出队个数和 MORE_PKTS/EMPTY 标志
        """
        queue = self._running_queue(self.rx_queues, qid)
        if cnt is None:
            cnt = self.info.max_burst
        received, empty = self._recv(queue, cnt)
        pkts[:] = received
        if received:
            queue.armed = False
        if empty:
            queue.arm()
            return BurstResult(BurstStatus.EMPTY, len(received))
        return BurstResult(BurstStatus.MORE_PKTS, len(received))

    def holds(self, buf: NetBuf) -> bool:
        """缓冲区是否仍在本设备的某个环上"""
        return False

    # ---- 后端 ----

    def _on_queue_configured(self, queue: NetQueue) -> None:
        pass

    def _on_start(self) -> None:
        pass

    @abstractmethod
    def _xmit(self, queue: NetQueue, pkts: Sequence[NetBuf], cnt: int) -> Tuple[int, bool]:
        """入队，返回 (接受个数, 调用后是否已满)"""

    @abstractmethod
    def _recv(self, queue: NetQueue, cnt: int) -> Tuple[List[NetBuf], bool]:
        """出队，返回 (缓冲区列表, 调用后是否为空)"""

    def close(self) -> None:
        self.state = DeviceState.UNCONFIGURED


# 与接口名一致的函数形式


def netdev_configure(dev: NetDevice, num_tx_queues: int, num_rx_queues: int) -> None:
    dev.configure(num_tx_queues, num_rx_queues)


def queue_configure(
    dev: NetDevice,
    direction: Any,
    qid: int,
    capacity: Optional[int] = None,
    alloc: Optional[AllocatorHandle] = None,
    callback: Optional[QueueCallback] = None,
) -> NetQueue:
    return dev.queue_configure(direction, qid, capacity, alloc, callback)


def netdev_start(dev: NetDevice) -> None:
    dev.start()


def netdev_info(dev: NetDevice) -> DeviceInfo:
    return dev.info


def tx_burst(dev: NetDevice, qid: int, pkts: Sequence[NetBuf], cnt: Optional[int] = None) -> BurstResult:
    return dev.tx_burst(qid, pkts, cnt)


def rx_burst(dev: NetDevice, qid: int, pkts: List[NetBuf], cnt: Optional[int] = None) -> BurstResult:
    return dev.rx_burst(qid, pkts, cnt)


def queue_intr_enable(dev: NetDevice, direction: Any, qid: int, on: bool) -> None:
    dev.queue_intr_enable(direction, qid, on)
