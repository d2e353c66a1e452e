"""系统调用垫片

固定大小的分派表，把按号调用变成直接函数调用。未注册的号码
分派到桩函数，返回 -ENOSYS；错误一律以负 errno 的形式带内返回。
"""
import errno
import logging
import struct
import sys
from enum import IntEnum
from typing import Any, Callable, Dict, List, Optional

from src.errors import SyscallError, UkError
from src.fs.ramfs import VNodeKind
from src.netdev.device import NetDevice
from src.netdev.netbuf import NetBuf, netbuf_alloc, netbuf_free

logger = logging.getLogger(__name__)

TABLE_SIZE = 512
ENOSYS_RESULT = -errno.ENOSYS

Handler = Callable[[int, int, int, int, int, int], int]

# stat 缓冲区: 类型(u32) + 大小(u64)
STAT_STRUCT = struct.Struct("<IQ")
TIMESPEC_STRUCT = struct.Struct("<qq")
STAT_KIND = {VNodeKind.FILE: 1, VNodeKind.DIRECTORY: 2}


class Sysno(IntEnum):
    """与宿主 x86_64 一致的系统调用号"""

    READ = 0
    WRITE = 1
    OPEN = 2
    CLOSE = 3
    STAT = 4
    LSEEK = 8
    SENDTO = 44
    RECVFROM = 45
    CLOCK_GETTIME = 228


def _enosys(a0: int = 0, a1: int = 0, a2: int = 0, a3: int = 0, a4: int = 0, a5: int = 0) -> int:
    return ENOSYS_RESULT


class SyscallTable:
    """系统调用分派表"""

    def __init__(self, size: int = TABLE_SIZE, debug: bool = False):
        """初始化分派表

        Args:
            size: 槽位个数
            debug: 调试模式下桩函数对每个号码记录一次日志
        """
        self.size = size
        self.debug = debug
        self.registered: List[bool] = [False] * size
        self.handlers: List[Handler] = [self._make_stub(n) for n in range(size)] if debug else [_enosys] * size

    def _make_stub(self, sysno: int) -> Handler:
        logged = []

        def stub(a0: int = 0, a1: int = 0, a2: int = 0, a3: int = 0, a4: int = 0, a5: int = 0) -> int:
            if not logged:
                logged.append(True)
                logger.debug(f"未实现的系统调用 {sysno}，返回 -ENOSYS")
            return ENOSYS_RESULT

        return stub

    def register_handler(self, sysno: int, handler: Handler) -> None:
        """注册处理函数，每个号码只能注册一次"""
        if not 0 <= sysno < self.size:
            raise SyscallError(SyscallError.OUT_OF_RANGE, f"系统调用号越界: {sysno}")
        if self.registered[sysno]:
            raise SyscallError(SyscallError.ALREADY_REGISTERED, f"系统调用 {sysno} 已注册")
        self.handlers[sysno] = handler
        self.registered[sysno] = True

    def is_registered(self, sysno: int) -> bool:
        return 0 <= sysno < self.size and self.registered[sysno]

    def dispatch(self, sysno: int, a0: int = 0, a1: int = 0, a2: int = 0, a3: int = 0, a4: int = 0, a5: int = 0) -> int:
        """按号调用；错误以负 errno 返回，从不抛出"""
        if not 0 <= sysno < self.size:
            return ENOSYS_RESULT
        try:
            return self.handlers[sysno](a0, a1, a2, a3, a4, a5)
        except UkError as e:
            return -e.errno
        except Exception:
            return -errno.EIO


def register_handler(table: SyscallTable, sysno: int, handler: Handler) -> None:
    table.register_handler(sysno, handler)


def dispatch(table: SyscallTable, sysno: int, *args: int) -> int:
    return table.dispatch(sysno, *args)


class UserMemory:
    """指针参数所指向的内存：堆区域内的字节偏移"""

    def __init__(self, view: memoryview):
        self.view = view
        self.size = len(view)

    def check(self, addr: int, length: int) -> None:
        """确认 [addr, addr+length) 落在用户内存内，否则 -EFAULT"""
        if addr < 0 or length < 0 or addr + length > self.size:
            raise SyscallError(SyscallError.BAD_ADDRESS, f"地址越界: {addr:#x}+{length}")

    def read(self, addr: int, length: int) -> bytes:
        self.check(addr, length)
        return bytes(self.view[addr:addr + length])

    def write(self, addr: int, data: bytes) -> int:
        self.check(addr, len(data))
        self.view[addr:addr + len(data)] = data
        return len(data)

    def read_cstring(self, addr: int, limit: int = 4096) -> str:
        """读取以 NUL 结尾的路径"""
        self.check(addr, 0)
        end = min(addr + limit, self.size)
        raw = bytes(self.view[addr:end])
        nul = raw.find(b"\0")
        if nul < 0:
            raise SyscallError(SyscallError.BAD_ADDRESS, f"字符串未以 NUL 结尾: {addr:#x}")
        return raw[:nul].decode("utf-8")

    def write_cstring(self, addr: int, text: str) -> int:
        return self.write(addr, text.encode("utf-8") + b"\0")


def _console_write(data: bytes) -> None:
    out = getattr(sys.stdout, "buffer", None)
    if out is not None:
        out.write(data)
    else:
        sys.stdout.write(data.decode("utf-8", errors="replace"))
    sys.stdout.flush()


def bind_default_table(
    vfs: Any,
    netdev: Optional[NetDevice],
    clock: Callable[[], int],
    memory: UserMemory,
    *,
    net_source: Any = None,
    console: Callable[[bytes], None] = _console_write,
    config: Optional[Dict[str, Any]] = None,
) -> SyscallTable:
    """把已组合的微库接入按 POSIX 编号的分派表

    Args:
        vfs: 虚拟文件系统，None 时只有 fd 1/2 的 write 可用，其余文件类调用保持 -ENOSYS
        netdev: 运行中的网络设备，None 时网络类调用保持 -ENOSYS
        clock: 单调时钟（纳秒）
        memory: 指针参数所在的内存
        net_source: sendto 分配缓冲区的来源（分配器句柄或缓冲区池）
        console: fd 1/2 未被文件占用时的输出
        config: syscall 配置段

    Returns:
        SyscallTable: 分派表
    """
    config = config or {}
    table = SyscallTable(config.get("table_size", TABLE_SIZE), config.get("debug", False))

    def sys_write(fd, buf, count, *_):
        data = memory.read(buf, count)
        if fd in (1, 2) and (vfs is None or fd not in vfs.handles):
            console(data)
            return count
        if vfs is None:
            return -errno.EBADF
        return vfs.write(fd, data)

    table.register_handler(Sysno.WRITE, sys_write)

    if vfs is not None:
        def sys_read(fd, buf, count, *_):
            memory.check(buf, count)
            data = vfs.read(fd, count)
            return memory.write(buf, data)

        def sys_open(path_ptr, flags, mode, *_):
            return vfs.open(memory.read_cstring(path_ptr), flags).fd

        def sys_close(fd, *_):
            vfs.close(fd)
            return 0

        def sys_stat(path_ptr, statbuf, *_):
            st = vfs.stat(memory.read_cstring(path_ptr))
            memory.write(statbuf, STAT_STRUCT.pack(STAT_KIND[st.kind], st.size))
            return 0

        def sys_lseek(fd, offset, whence, *_):
            return vfs.lseek(fd, offset, whence)

        table.register_handler(Sysno.READ, sys_read)
        table.register_handler(Sysno.OPEN, sys_open)
        table.register_handler(Sysno.CLOSE, sys_close)
        table.register_handler(Sysno.STAT, sys_stat)
        table.register_handler(Sysno.LSEEK, sys_lseek)

    def sys_clock_gettime(clk_id, ts_ptr, *_):
        now = clock()
        if ts_ptr:
            memory.write(ts_ptr, TIMESPEC_STRUCT.pack(now // 1_000_000_000, now % 1_000_000_000))
        return now

    table.register_handler(Sysno.CLOCK_GETTIME, sys_clock_gettime)

    if netdev is not None:
        tx_queue = netdev.queue("tx", 0)
        rx_queue = netdev.queue("rx", 0)
        source = net_source or tx_queue.alloc
        rx_pkts: List[NetBuf] = []

        def sys_sendto(fd, buf, length, *_):
            data = memory.read(buf, length)
            pkt = netbuf_alloc(source, length, 0)
            try:
                pkt.set_payload(data)
            except UkError:
                netbuf_free(pkt)
                raise
            if netdev.tx_burst(0, [pkt], 1).count == 0:
                netbuf_free(pkt)
                return -errno.EAGAIN
            return length

        def sys_recvfrom(fd, buf, length, *_):
            memory.check(buf, length)
            if netdev.rx_burst(0, rx_pkts, 1).count == 0:
                return -errno.EAGAIN
            pkt = rx_pkts[0]
            data = pkt.payload()[:length]
            n = memory.write(buf, data)
            netbuf_free(pkt)
            return n

        table.register_handler(Sysno.SENDTO, sys_sendto)
        table.register_handler(Sysno.RECVFROM, sys_recvfrom)
        logger.debug(f"网络系统调用已绑定到 {netdev!r} (tx={tx_queue!r}, rx={rx_queue!r})")

    logger.debug(f"系统调用表就绪: {sum(table.registered)} 个已注册")
    return table
