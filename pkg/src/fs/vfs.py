"""vfscore：虚拟文件系统层

挂载表按最长前缀匹配；路径只接受以 "/" 开头的绝对路径，
不支持符号链接、"." 和 ".."。打开的文件占用最小的空闲描述符，
0..2 保留给控制台。
"""
import heapq
import logging
import os
from enum import IntFlag
from typing import Any, Dict, List, NamedTuple, Optional, Tuple, Union

from src.errors import FsError
from src.fs.ramfs import VNodeKind

FIRST_FD = 3


class OpenFlags(IntFlag):
    READ = 1
    WRITE = 2
    CREATE = 4
    TRUNC = 8
    APPEND = 16


class StatResult(NamedTuple):
    kind: VNodeKind
    size: int


class FileHandle:
    """打开的文件"""

    __slots__ = ("fd", "fs", "node", "cursor", "flags", "mount", "closed")

    def __init__(self, fd: int, fs: Any, node: Any, flags: OpenFlags, mount: str):
        self.fd = fd
        self.fs = fs
        self.node = node
        self.cursor = 0
        self.flags = flags
        self.mount = mount
        self.closed = False

    def __repr__(self) -> str:
        return f"FileHandle(fd={self.fd}, {self.node.name!r}, cursor={self.cursor})"


def parse_flags(mode: Union[str, int, OpenFlags]) -> OpenFlags:
    """把 "r"/"w"/"a"/"r+" 等模式或 POSIX O_* 标志转换成 OpenFlags"""
    if isinstance(mode, OpenFlags):
        return mode
    if isinstance(mode, str):
        table = {
            "r": OpenFlags.READ,
            "r+": OpenFlags.READ | OpenFlags.WRITE,
            "w": OpenFlags.WRITE | OpenFlags.CREATE | OpenFlags.TRUNC,
            "w+": OpenFlags.READ | OpenFlags.WRITE | OpenFlags.CREATE | OpenFlags.TRUNC,
            "a": OpenFlags.WRITE | OpenFlags.CREATE | OpenFlags.APPEND,
        }
        if mode not in table:
            raise FsError(FsError.INVALID, f"非法的打开模式: {mode!r}")
        return table[mode]
    acc = mode & 3
    flags = {os.O_RDONLY: OpenFlags.READ, os.O_WRONLY: OpenFlags.WRITE}.get(acc, OpenFlags.READ | OpenFlags.WRITE)
    if mode & os.O_CREAT:
        flags |= OpenFlags.CREATE
    if mode & os.O_TRUNC:
        flags |= OpenFlags.TRUNC
    if mode & os.O_APPEND:
        flags |= OpenFlags.APPEND
    return flags


class VFS:
    """虚拟文件系统"""

    def __init__(self, config: Optional[Dict[str, Any]] = None):
        self.config = config or {}
        self.mounts: Dict[str, Any] = {}
        # 按长度降序的挂载点，用于最长前缀匹配
        self._mount_order: List[str] = []
        self.handles: Dict[int, FileHandle] = {}
        self._free_fds: List[int] = []
        self._next_fd = FIRST_FD
        self.max_fds = self.config.get("max_fds", 1024)
        self.logger = logging.getLogger(__name__)

    # ---- 挂载 ----

    @staticmethod
    def _normalize(path: str) -> str:
        if not isinstance(path, str) or not path.startswith("/"):
            raise FsError(FsError.BAD_PATH, f"只支持绝对路径: {path!r}")
        parts = [p for p in path.split("/") if p]
        for p in parts:
            if p in (".", ".."):
                raise FsError(FsError.BAD_PATH, f"路径中不允许 {p!r}: {path!r}")
        return "/" + "/".join(parts)

    def mount(self, fs: Any, path: str = "/") -> None:
        """挂载文件系统"""
        point = self._normalize(path)
        if point in self.mounts:
            raise FsError(FsError.BUSY, f"{point} 已挂载")
        self.mounts[point] = fs
        self._mount_order = sorted(self.mounts, key=len, reverse=True)
        self.logger.info(f"挂载 {fs.name} 到 {point}")

    def umount(self, path: str) -> None:
        point = self._normalize(path)
        if point not in self.mounts:
            raise FsError(FsError.NOT_FOUND, f"{point} 未挂载")
        if any(h.mount == point for h in self.handles.values()):
            raise FsError(FsError.BUSY, f"{point} 上仍有打开的文件")
        del self.mounts[point]
        self._mount_order = sorted(self.mounts, key=len, reverse=True)
        self.logger.info(f"卸载 {point}")

    def _resolve(self, path: str) -> Tuple[str, Any, List[str]]:
        """路径 -> (挂载点, 文件系统, 挂载点以下的路径分量)"""
        norm = self._normalize(path)
        for point in self._mount_order:
            if point == "/":
                return point, self.mounts[point], norm.split("/")[1:] if norm != "/" else []
            if norm == point:
                return point, self.mounts[point], []
            if norm.startswith(point + "/"):
                return point, self.mounts[point], norm[len(point) + 1:].split("/")
        raise FsError(FsError.NOT_FOUND, f"{path!r} 没有对应的挂载点")

    def _walk(self, fs: Any, parts: List[str]) -> Any:
        node = fs.root()
        for name in parts:
            node = fs.lookup(node, name)
        return node

    # ---- 描述符 ----

    def _alloc_fd(self) -> int:
        if self._free_fds:
            return heapq.heappop(self._free_fds)
        if self._next_fd >= self.max_fds:
            raise FsError(FsError.BUSY, f"描述符耗尽 ({self.max_fds})")
        fd = self._next_fd
        self._next_fd += 1
        return fd

    def handle(self, h: Union[int, FileHandle]) -> FileHandle:
        if isinstance(h, FileHandle):
            if h.closed:
                raise FsError(FsError.BAD_HANDLE, f"{h!r} 已关闭")
            return h
        handle = self.handles.get(h)
        if handle is None:
            raise FsError(FsError.BAD_HANDLE, f"无效的文件描述符: {h}")
        return handle

    # ---- 文件操作 ----

    def open(self, path: str, flags: Union[str, int, OpenFlags] = "r") -> FileHandle:
        """打开文件

        Args:
            path: 绝对路径
            flags: 打开模式，CREATE 只在可写文件系统上创建

        Returns:
            FileHandle: 文件句柄
        """
        flags = parse_flags(flags)
        point, fs, parts = self._resolve(path)
        try:
            node = self._walk(fs, parts)
        except FsError as e:
            if e.code != FsError.NOT_FOUND or not flags & OpenFlags.CREATE:
                raise
            if fs.read_only:
                raise FsError(FsError.READ_ONLY_FS, f"{point} 只读")
            if not parts:
                raise
            parent = self._walk(fs, parts[:-1])
            node = fs.create(parent, parts[-1])
        if node.is_dir:
            raise FsError(FsError.IS_DIRECTORY, f"{path!r} 是目录")
        if flags & (OpenFlags.WRITE | OpenFlags.TRUNC) and fs.read_only:
            raise FsError(FsError.READ_ONLY_FS, f"{point} 只读")
        if flags & OpenFlags.TRUNC:
            fs.truncate(node, 0)
        handle = FileHandle(self._alloc_fd(), fs, node, flags, point)
        self.handles[handle.fd] = handle
        return handle

    def read(self, h: Union[int, FileHandle], n: int = -1) -> bytes:
        """从游标处读至多 n 字节并前移游标"""
        handle = self.handle(h)
        if not handle.flags & OpenFlags.READ:
            raise FsError(FsError.BAD_HANDLE, f"{handle!r} 未以读模式打开")
        size = handle.node.size
        if n < 0 or handle.cursor + n > size:
            n = size - handle.cursor
        data = handle.fs.read(handle.node, handle.cursor, n)
        handle.cursor += len(data)
        return data

    def write(self, h: Union[int, FileHandle], data: bytes) -> int:
        """在游标处写入，必要时扩展文件"""
        handle = self.handle(h)
        if not handle.flags & OpenFlags.WRITE:
            raise FsError(FsError.BAD_HANDLE, f"{handle!r} 未以写模式打开")
        if handle.flags & OpenFlags.APPEND:
            handle.cursor = handle.node.size
        count = handle.fs.write(handle.node, handle.cursor, data)
        handle.cursor += count
        return count

    def lseek(self, h: Union[int, FileHandle], offset: int, whence: int = os.SEEK_SET) -> int:
        handle = self.handle(h)
        base = {os.SEEK_SET: 0, os.SEEK_CUR: handle.cursor, os.SEEK_END: handle.node.size}.get(whence)
        if base is None:
            raise FsError(FsError.INVALID, f"非法的 whence: {whence}")
        pos = base + offset
        if pos < 0 or pos > handle.node.size:
            raise FsError(FsError.INVALID, f"偏移越界: {pos}")
        handle.cursor = pos
        return pos

    def close(self, h: Union[int, FileHandle]) -> None:
        handle = self.handle(h)
        handle.closed = True
        del self.handles[handle.fd]
        heapq.heappush(self._free_fds, handle.fd)

    def stat(self, path: str) -> StatResult:
        _, fs, parts = self._resolve(path)
        node = self._walk(fs, parts)
        return StatResult(node.kind, node.size)

    def fstat(self, h: Union[int, FileHandle]) -> StatResult:
        node = self.handle(h).node
        return StatResult(node.kind, node.size)

    def mkdir(self, path: str) -> None:
        point, fs, parts = self._resolve(path)
        if not parts:
            raise FsError(FsError.EXISTS, f"{path!r} 已存在")
        if fs.read_only:
            raise FsError(FsError.READ_ONLY_FS, f"{point} 只读")
        parent = self._walk(fs, parts[:-1])
        fs.mkdir(parent, parts[-1])

    def listdir(self, path: str) -> List[str]:
        _, fs, parts = self._resolve(path)
        return fs.listdir(self._walk(fs, parts))


def mount(vfs: VFS, fs: Any, path: str = "/") -> None:
    vfs.mount(fs, path)


def vfs_open(vfs: VFS, path: str, flags: Union[str, int, OpenFlags] = "r") -> FileHandle:
    return vfs.open(path, flags)
