"""回环后端

一对设备通过共享的交叉环相连：A 的发送队列 q 即 B 的接收队列 q，
反之亦然。环是唯一带内部锁的结构（单生产者单消费者）。
"""
import threading
from collections import deque
from typing import Any, Deque, Dict, List, Optional, Sequence, Tuple

from src.netdev.device import CallbackGuard, Direction, NetDevice, NetQueue
from src.netdev.netbuf import NetBuf


class CrossRing:
    """有界 FIFO，连接发送端队列和接收端队列"""

    def __init__(self):
        self.items: Deque[NetBuf] = deque()
        self.lock = threading.Lock()
        self.capacity = 0
        self.tx_queue: Optional[NetQueue] = None
        self.rx_queue: Optional[NetQueue] = None
        self.enqueued = 0
        self.dequeued = 0

    def __len__(self) -> int:
        return len(self.items)

    def attach(self, queue: NetQueue) -> None:
        if queue.direction is Direction.TX:
            self.tx_queue = queue
        else:
            self.rx_queue = queue
        caps = [q.capacity for q in (self.tx_queue, self.rx_queue) if q is not None]
        self.capacity = min(caps)


class LoopbackDevice(NetDevice):
    """回环设备"""

    backend = "loopback"

    def __init__(
        self,
        name: str,
        tx_rings: Dict[int, CrossRing],
        rx_rings: Dict[int, CrossRing],
        config: Optional[Dict[str, Any]] = None,
        guard: Optional[CallbackGuard] = None,
    ):
        super().__init__(name, config, guard)
        self.tx_rings = tx_rings
        self.rx_rings = rx_rings

    def _ring(self, queue: NetQueue) -> CrossRing:
        rings = self.tx_rings if queue.direction is Direction.TX else self.rx_rings
        if queue.qid not in rings:
            rings[queue.qid] = CrossRing()
        return rings[queue.qid]

    def _on_queue_configured(self, queue: NetQueue) -> None:
        self._ring(queue).attach(queue)

    def _xmit(self, queue: NetQueue, pkts: Sequence[NetBuf], cnt: int) -> Tuple[int, bool]:
        ring = self.tx_rings[queue.qid]
        items = ring.items
        with ring.lock:
            room = ring.capacity - len(items)
            n = cnt if cnt < room else room
            if n > 0:
                batch = pkts[:n] if n < len(pkts) else pkts
                items.extend(batch)
                ring.enqueued += n
                if self.debug:
                    for buf in batch:
                        buf.in_flight += 1
            full = len(items) == ring.capacity
        peer = ring.rx_queue
        if n > 0 and peer is not None and peer.armed:
            peer.notify()
        return n, full

    def _recv(self, queue: NetQueue, cnt: int) -> Tuple[List[NetBuf], bool]:
        ring = self.rx_rings[queue.qid]
        items = ring.items
        with ring.lock:
            avail = len(items)
            n = cnt if cnt < avail else avail
            if n == avail:
                out = list(items)
                items.clear()
            else:
                popleft = items.popleft
                out = [popleft() for _ in range(n)]
            ring.dequeued += n
            empty = not items
        if self.debug:
            for buf in out:
                buf.in_flight -= 1
        peer = ring.tx_queue
        if n > 0 and peer is not None and peer.armed:
            peer.notify()
        return out, empty

    def holds(self, buf: NetBuf) -> bool:
        for rings in (self.tx_rings, self.rx_rings):
            for ring in rings.values():
                with ring.lock:
                    if any(b is buf for b in ring.items):
                        return True
        return False


def loopback_pair(config: Optional[Dict[str, Any]] = None, names: Tuple[str, str] = ("lo0", "lo1")) -> Tuple[LoopbackDevice, LoopbackDevice]:
    """创建一对相连的回环设备

    Args:
        config: netdev 配置段
        names: 两个设备的名称

    Returns:
        Tuple[LoopbackDevice, LoopbackDevice]: (A, B)，A 发 B 收，B 发 A 收
    """
    a_to_b: Dict[int, CrossRing] = {}
    b_to_a: Dict[int, CrossRing] = {}
    guard = CallbackGuard()
    a = LoopbackDevice(names[0], a_to_b, b_to_a, config, guard)
    b = LoopbackDevice(names[1], b_to_a, a_to_b, config, guard)
    return a, b
