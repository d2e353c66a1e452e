"""网络包缓冲区

缓冲区由应用分配和持有，通过设备接口传递。存储布局：
[headroom][payload ... capacity)，data_offset 之前可以压入协议头。
"""
import logging
from dataclasses import dataclass
from typing import List, Optional

from src.alloc.base import AllocatorHandle
from src.errors import AllocError, NetdevError

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class NetBuf:
    """包缓冲区"""

    storage: memoryview
    capacity: int
    headroom: int
    data_offset: int
    data_len: int = 0
    origin_allocator: Optional[AllocatorHandle] = None
    block: Optional[int] = None
    pool: Optional["NetBufPool"] = None
    # 每次释放加一；in_flight 为调试模式下所在环的个数
    generation: int = 0
    in_flight: int = 0
    freed: bool = False

    @property
    def payload_capacity(self) -> int:
        return self.capacity - self.data_offset

    def payload(self) -> memoryview:
        """有效载荷视图"""
        return self.storage[self.data_offset:self.data_offset + self.data_len]

    def tobytes(self) -> bytes:
        return bytes(self.storage[self.data_offset:self.data_offset + self.data_len])

    def set_payload(self, data: bytes) -> None:
        n = len(data)
        if self.data_offset + n > self.capacity:
            raise NetdevError(NetdevError.BAD_CAPACITY, f"载荷过长: {n} > {self.capacity - self.data_offset}")
        self.storage[self.data_offset:self.data_offset + n] = data
        self.data_len = n

    def append(self, data: bytes) -> None:
        end = self.data_offset + self.data_len
        n = len(data)
        if end + n > self.capacity:
            raise NetdevError(NetdevError.BAD_CAPACITY, f"载荷过长: {self.data_len + n}")
        self.storage[end:end + n] = data
        self.data_len += n

    def push_header(self, length: int) -> memoryview:
        """占用预留头部空间，返回新头部视图"""
        if length > self.headroom:
            raise NetdevError(NetdevError.BAD_CAPACITY, f"头部空间不足: {length} > {self.headroom}")
        self.headroom -= length
        self.data_offset -= length
        self.data_len += length
        return self.storage[self.data_offset:self.data_offset + length]

    def pull_header(self, length: int) -> bytes:
        """剥离载荷开头的 length 字节"""
        if length > self.data_len:
            raise NetdevError(NetdevError.BAD_CAPACITY, f"剥离长度超过载荷: {length} > {self.data_len}")
        head = bytes(self.storage[self.data_offset:self.data_offset + length])
        self.data_offset += length
        self.data_len -= length
        return head

    def reset(self, headroom: int) -> None:
        self.headroom = headroom
        self.data_offset = headroom
        self.data_len = 0


class NetBufPool:
    """预分配的缓冲区池"""

    def __init__(self, alloc: AllocatorHandle, count: int, payload_capacity: int, headroom: int = 0):
        """初始化缓冲区池

        Args:
            alloc: 缓冲区存储来源
            count: 缓冲区个数
            payload_capacity: 每个缓冲区的载荷容量
            headroom: 每个缓冲区的头部预留
        """
        if count <= 0 or payload_capacity <= 0:
            raise NetdevError(NetdevError.BAD_CAPACITY, f"非法的缓冲区池参数: {count}x{payload_capacity}")
        self.alloc = alloc
        self.count = count
        self.payload_capacity = payload_capacity
        self.headroom = headroom
        self.buffers: List[NetBuf] = []
        for _ in range(count):
            buf = netbuf_alloc(alloc, payload_capacity, headroom)
            buf.pool = self
            self.buffers.append(buf)
        self._free: List[NetBuf] = list(reversed(self.buffers))
        logger.debug(f"缓冲区池就绪: {count} x {payload_capacity + headroom} 字节")

    def __len__(self) -> int:
        """池内空闲缓冲区数"""
        return len(self._free)

    def get(self) -> NetBuf:
        if not self._free:
            raise NetdevError(NetdevError.OUT_OF_MEMORY, f"缓冲区池已耗尽 ({self.count})")
        buf = self._free.pop()
        buf.freed = False
        return buf

    def get_many(self, n: int) -> List[NetBuf]:
        """一次取出 n 个缓冲区，不足时取出全部"""
        free = self._free
        k = min(n, len(free))
        if k == 0:
            return []
        taken = free[-k:]
        del free[-k:]
        for buf in taken:
            buf.freed = False
        return taken

    def put(self, buf: NetBuf) -> None:
        buf.reset(self.headroom)
        buf.generation += 1
        buf.freed = True
        self._free.append(buf)

    def destroy(self) -> None:
        """把全部存储还给分配器"""
        for buf in self.buffers:
            buf.pool = None
            self.alloc.release(buf.block)
        self.buffers.clear()
        self._free.clear()


def netbuf_alloc(source, payload_capacity: Optional[int] = None, headroom: int = 0) -> NetBuf:
    """分配包缓冲区

    Args:
        source: 分配器句柄或缓冲区池
        payload_capacity: 载荷容量，从池中分配时忽略
        headroom: 头部预留，从池中分配时忽略

    Returns:
        NetBuf: data_offset == headroom、data_len == 0 的缓冲区
    """
    if isinstance(source, NetBufPool):
        return source.get()
    if payload_capacity is None or payload_capacity <= 0 or headroom < 0:
        raise NetdevError(NetdevError.BAD_CAPACITY, f"非法的缓冲区容量: {payload_capacity}/{headroom}")
    capacity = headroom + payload_capacity
    try:
        block = source.allocate(capacity)
    except AllocError as e:
        if e.code == AllocError.OUT_OF_MEMORY:
            raise NetdevError(NetdevError.OUT_OF_MEMORY, f"缓冲区分配失败: {e.message}")
        raise
    return NetBuf(
        storage=source.buffer(block, capacity),
        capacity=capacity,
        headroom=headroom,
        data_offset=headroom,
        origin_allocator=source,
        block=block,
    )


def netbuf_free(buf: NetBuf) -> None:
    """释放缓冲区：池缓冲区回池，其余归还分配器"""
    if buf.in_flight:
        raise NetdevError(NetdevError.BUFFER_IN_FLIGHT, "缓冲区仍在队列中")
    if buf.pool is not None:
        buf.pool.put(buf)
        return
    if buf.freed:
        return
    buf.generation += 1
    buf.freed = True
    buf.origin_allocator.release(buf.block)
