"""宿主 UDP 后端

每个缓冲区的载荷封装成一个数据报，不加任何头部。用于跨进程演示，
不参与验收计时。只支持单队列；没有对端边沿，武装的接收队列在
下一次观察到数据时解除武装。
"""
import errno
import socket
from typing import Any, Dict, List, Optional, Sequence, Tuple

from tenacity import retry, retry_if_exception_type, stop_after_attempt, wait_fixed

from src.errors import NetdevError
from src.netdev.device import NetDevice, NetQueue
from src.netdev.netbuf import NetBuf, netbuf_alloc

MAX_DATAGRAM = 65507


def parse_endpoint(endpoint: str) -> Tuple[str, int]:
    """解析 host:port"""
    host, sep, port = endpoint.rpartition(":")
    if not sep or not host:
        raise NetdevError(NetdevError.BAD_ENDPOINT, f"端点格式错误: {endpoint!r}")
    try:
        return host, int(port)
    except ValueError:
        raise NetdevError(NetdevError.BAD_ENDPOINT, f"端口格式错误: {endpoint!r}")


class HostUdpDevice(NetDevice):
    """宿主 UDP 设备"""

    backend = "host_udp"

    def __init__(self, name: str, local: str, remote: str, config: Optional[Dict[str, Any]] = None):
        """初始化设备

        Args:
            name: 设备名称
            local: 本地绑定端点 host:port
            remote: 发送目标端点 host:port
            config: netdev 配置段
        """
        config = dict(config or {})
        config["max_queues"] = 1
        super().__init__(name, config)
        self.local = parse_endpoint(local)
        self.remote = parse_endpoint(remote)
        self.payload_capacity = self.config.get("udp_payload_capacity", 2048)
        self.sock: Optional[socket.socket] = None

    @retry(
        stop=stop_after_attempt(3),
        wait=wait_fixed(0.2),
        retry=retry_if_exception_type(OSError),
        reraise=True,
    )
    def _bind(self) -> socket.socket:
        sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        try:
            sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
            sock.bind(self.local)
        except OSError:
            sock.close()
            raise
        sock.setblocking(False)
        return sock

    def _on_start(self) -> None:
        try:
            self.sock = self._bind()
        except OSError as e:
            self.logger.error(f"{self.name} 绑定 {self.local} 失败: {e}")
            raise NetdevError(NetdevError.BAD_ENDPOINT, f"绑定失败: {e}")
        self.local = self.sock.getsockname()

    def _xmit(self, queue: NetQueue, pkts: Sequence[NetBuf], cnt: int) -> Tuple[int, bool]:
        sent = 0
        for buf in pkts[:cnt]:
            try:
                self.sock.sendto(buf.payload(), self.remote)
            except BlockingIOError:
                return sent, True
            except OSError as e:
                if e.errno in (errno.ENOBUFS, errno.EAGAIN):
                    return sent, True
                raise
            sent += 1
        return sent, False

    def _recv(self, queue: NetQueue, cnt: int) -> Tuple[List[NetBuf], bool]:
        out: List[NetBuf] = []
        while len(out) < cnt:
            try:
                data = self.sock.recv(MAX_DATAGRAM)
            except BlockingIOError:
                return out, True
            buf = netbuf_alloc(queue.alloc, max(self.payload_capacity, len(data)), 0)
            buf.set_payload(data)
            out.append(buf)
        return out, False

    def close(self) -> None:
        if self.sock is not None:
            self.sock.close()
            self.sock = None
        super().close()
