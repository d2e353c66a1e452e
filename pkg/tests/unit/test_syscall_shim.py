"""系统调用垫片单元测试"""
import errno
import logging
import os
import random

import pytest

from src.boot.platform import monotonic_ns
from src.errors import FsError, SyscallError
from src.fs.ramfs import RamFS
from src.fs.vfs import VFS
from src.netdev.netbuf import NetBufPool
from src.syscall.shim import (
    ENOSYS_RESULT,
    STAT_STRUCT,
    TIMESPEC_STRUCT,
    Sysno,
    SyscallTable,
    UserMemory,
    bind_default_table,
    dispatch,
    register_handler,
)


@pytest.fixture
def memory(region) -> UserMemory:
    return UserMemory(region.view)


class _Console(list):
    """收集控制台输出"""

    def sink(self, data: bytes) -> None:
        self.append(bytes(data))


@pytest.fixture
def out() -> _Console:
    return _Console()


@pytest.fixture
def fs_table(config, memory, out) -> SyscallTable:
    """接入 RamFS 的分派表"""
    vfs = VFS(config["fs"])
    vfs.mount(RamFS(), "/")
    return bind_default_table(vfs, None, monotonic_ns, memory, console=out.sink, config=config["syscall"])


def test_sentinel_is_enosys():
    """测试桩函数返回值与宿主 ENOSYS 一致"""
    assert ENOSYS_RESULT == -errno.ENOSYS == -38
    assert Sysno.READ == 0 and Sysno.WRITE == 1 and Sysno.CLOCK_GETTIME == 228


def test_register_and_dispatch():
    """测试注册处理函数后直接调用"""
    table = SyscallTable()
    register_handler(table, 1, lambda a0, a1, a2, a3, a4, a5: a0 + a5)
    assert dispatch(table, 1, 40, 0, 0, 0, 0, 2) == 42
    assert table.is_registered(1)
    assert not table.is_registered(2)
    with pytest.raises(SyscallError) as exc:
        table.register_handler(1, lambda *a: 0)
    assert exc.value.code == SyscallError.ALREADY_REGISTERED
    for sysno in (600, 512, -1):
        with pytest.raises(SyscallError) as exc:
            table.register_handler(sysno, lambda *a: 0)
        assert exc.value.code == SyscallError.OUT_OF_RANGE


def test_unregistered_and_out_of_range():
    """测试未注册与越界的号码返回 -ENOSYS"""
    table = SyscallTable()
    assert table.dispatch(77) == -38
    assert table.dispatch(600) == -38
    assert table.dispatch(-5) == -38


def test_transparency():
    """测试分派结果与直接调用一致"""
    table = SyscallTable()

    def echo(a0, a1, a2, a3, a4, a5):
        return a0 * 31 + a1 - a2 ^ a3 + a4 * a5

    table.register_handler(300, echo)
    rng = random.Random(1)
    for _ in range(1000):
        args = [rng.randint(-(1 << 40), 1 << 40) for _ in range(6)]
        assert table.dispatch(300, *args) == echo(*args)


def test_errors_become_negative_errno():
    """测试异常转换成负 errno"""
    table = SyscallTable()

    def missing(*_):
        raise FsError(FsError.NOT_FOUND, "x")

    def broken(*_):
        raise ValueError("x")

    table.register_handler(10, missing)
    table.register_handler(11, broken)
    assert table.dispatch(10) == -errno.ENOENT
    assert table.dispatch(11) == -errno.EIO


def test_debug_stub_logs_once(caplog):
    """测试调试模式下每个未实现号码只记录一次"""
    table = SyscallTable(debug=True)
    with caplog.at_level(logging.DEBUG, logger="src.syscall.shim"):
        assert table.dispatch(99) == -38
        assert table.dispatch(99) == -38
        assert table.dispatch(98) == -38
    messages = [r.message for r in caplog.records if "未实现的系统调用" in r.message]
    assert len(messages) == 2


def test_file_roundtrip(fs_table, memory):
    """测试经分派表写入再读出文件"""
    memory.write_cstring(0, "/hello")
    memory.write(256, b"hello")
    fd = fs_table.dispatch(Sysno.OPEN, 0, os.O_WRONLY | os.O_CREAT)
    assert fd == 3
    assert fs_table.dispatch(Sysno.WRITE, fd, 256, 5) == 5
    assert fs_table.dispatch(Sysno.CLOSE, fd) == 0
    fd = fs_table.dispatch(Sysno.OPEN, 0, os.O_RDONLY)
    assert fs_table.dispatch(Sysno.READ, fd, 512, 100) == 5
    assert memory.read(512, 5) == b"hello"
    assert fs_table.dispatch(Sysno.LSEEK, fd, 1, os.SEEK_SET) == 1
    assert fs_table.dispatch(Sysno.READ, fd, 512, 2) == 2
    assert memory.read(512, 2) == b"el"
    assert fs_table.dispatch(Sysno.STAT, 0, 1024) == 0
    assert STAT_STRUCT.unpack(memory.read(1024, STAT_STRUCT.size)) == (1, 5)
    assert fs_table.dispatch(Sysno.CLOSE, fd) == 0
    assert fs_table.dispatch(Sysno.CLOSE, fd) == -errno.EBADF


def test_open_missing_path(fs_table, memory):
    """测试打开不存在的路径返回 -ENOENT"""
    memory.write_cstring(0, "/missing")
    assert fs_table.dispatch(Sysno.OPEN, 0, os.O_RDONLY) == -errno.ENOENT
    memory.write_cstring(0, "relative")
    assert fs_table.dispatch(Sysno.OPEN, 0, os.O_RDONLY) == -errno.EINVAL


def test_bad_pointers(fs_table, memory):
    """测试越界指针返回 -EFAULT"""
    assert fs_table.dispatch(Sysno.WRITE, 1, memory.size - 2, 10) == -errno.EFAULT
    assert fs_table.dispatch(Sysno.OPEN, memory.size + 1, 0) == -errno.EFAULT


def test_read_into_bad_buffer_keeps_data(config, out):
    """测试读入越界缓冲区返回 -EFAULT 且不消耗文件内容"""
    memory = UserMemory(memoryview(bytearray(64)))
    vfs = VFS(config["fs"])
    vfs.mount(RamFS(), "/")
    table = bind_default_table(vfs, None, monotonic_ns, memory, console=out.sink, config=config["syscall"])
    memory.write_cstring(0, "/f")
    memory.write(16, b"hello")
    fd = table.dispatch(Sysno.OPEN, 0, os.O_RDWR | os.O_CREAT)
    assert table.dispatch(Sysno.WRITE, fd, 16, 5) == 5
    assert table.dispatch(Sysno.LSEEK, fd, 0, os.SEEK_SET) == 0
    assert table.dispatch(Sysno.READ, fd, 62, 5) == -errno.EFAULT
    assert table.dispatch(Sysno.READ, fd, 0, 5) == 5
    assert memory.read(0, 5) == b"hello"


def test_recvfrom_into_bad_buffer_keeps_packet(config, memory, loopback, make_handle):
    """测试接收到越界缓冲区返回 -EFAULT 且数据包仍留在队列里"""
    a, b = loopback
    pool = NetBufPool(make_handle("tlsf", length=1 << 19), 8, 256)
    sender = bind_default_table(None, a, monotonic_ns, memory, net_source=pool, config=config["syscall"])
    receiver = bind_default_table(None, b, monotonic_ns, memory, net_source=pool, config=config["syscall"])
    memory.write(600_000, b"ping")
    assert sender.dispatch(Sysno.SENDTO, 3, 600_000, 4) == 4
    assert receiver.dispatch(Sysno.RECVFROM, 3, memory.size - 2, 64) == -errno.EFAULT
    assert receiver.dispatch(Sysno.RECVFROM, 3, 600_100, 64) == 4
    assert memory.read(600_100, 4) == b"ping"
    assert len(pool) == 8


def test_console_write(fs_table, memory, out):
    """测试 fd 1 写到控制台"""
    memory.write(0, b"Hello world!\n")
    assert fs_table.dispatch(Sysno.WRITE, 1, 0, 13) == 13
    assert out == [b"Hello world!\n"]


def test_clock(fs_table, memory):
    """测试时钟单调不减并写入 timespec"""
    first = fs_table.dispatch(Sysno.CLOCK_GETTIME, 1, 0)
    second = fs_table.dispatch(Sysno.CLOCK_GETTIME, 1, 64)
    assert 0 < first <= second
    sec, nsec = TIMESPEC_STRUCT.unpack(memory.read(64, TIMESPEC_STRUCT.size))
    assert sec * 1_000_000_000 + nsec == second


def test_without_vfs_or_netdev(config, memory, out):
    """测试未组合 VFS 和网络时相应调用走桩函数"""
    table = bind_default_table(None, None, monotonic_ns, memory, console=out.sink, config=config["syscall"])
    for sysno in (Sysno.READ, Sysno.OPEN, Sysno.CLOSE, Sysno.STAT, Sysno.SENDTO, Sysno.RECVFROM):
        assert table.dispatch(sysno, 0, 0, 0) == -38
    memory.write(0, b"x")
    assert table.dispatch(Sysno.WRITE, 2, 0, 1) == 1
    assert table.dispatch(Sysno.WRITE, 5, 0, 1) == -errno.EBADF
    assert out == [b"x"]


def test_network_calls(config, memory, loopback, make_handle):
    """测试 sendto/recvfrom 经回环设备传递数据"""
    a, b = loopback
    pool = NetBufPool(make_handle("tlsf", length=1 << 19), 8, 256)
    sender = bind_default_table(None, a, monotonic_ns, memory, net_source=pool, config=config["syscall"])
    receiver = bind_default_table(None, b, monotonic_ns, memory, net_source=pool, config=config["syscall"])
    memory.write(600_000, b"ping")
    assert sender.dispatch(Sysno.SENDTO, 3, 600_000, 4) == 4
    assert receiver.dispatch(Sysno.RECVFROM, 3, 600_100, 64) == 4
    assert memory.read(600_100, 4) == b"ping"
    assert receiver.dispatch(Sysno.RECVFROM, 3, 600_100, 64) == -errno.EAGAIN
    assert len(pool) == 8


def test_dispatch_is_total(fs_table):
    """测试任意号码和参数都不会抛出"""
    rng = random.Random(17)
    values = [0, 1, 2, 3, -1, 1 << 20, (1 << 63) - 1, -(1 << 63)]
    for sysno in range(512):
        for _ in range(3):
            args = [rng.choice(values) if rng.random() < 0.5 else rng.randint(0, 4096) for _ in range(6)]
            result = fs_table.dispatch(sysno, *args)
            assert isinstance(result, int)


def test_user_memory_bounds(memory):
    """测试用户内存越界与未终止的字符串"""
    with pytest.raises(SyscallError) as exc:
        memory.read(-1, 4)
    assert exc.value.code == SyscallError.BAD_ADDRESS
    memory.write(memory.size - 4, b"abcd")
    with pytest.raises(SyscallError) as exc:
        memory.read_cstring(memory.size - 4)
    assert exc.value.code == SyscallError.BAD_ADDRESS
    memory.write_cstring(10, "/x")
    assert memory.read_cstring(10) == "/x"
