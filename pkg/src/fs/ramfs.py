"""内存文件系统"""
import logging
from enum import Enum
from typing import Dict, List, Optional, Union

from src.errors import FsError

logger = logging.getLogger(__name__)


class VNodeKind(str, Enum):
    FILE = "file"
    DIRECTORY = "directory"


class VNode:
    """文件或目录节点"""

    __slots__ = ("kind", "name", "data")

    def __init__(self, kind: VNodeKind, name: str):
        self.kind = kind
        self.name = name
        self.data: Union[bytearray, Dict[str, "VNode"]] = bytearray() if kind is VNodeKind.FILE else {}

    def __repr__(self) -> str:
        return f"VNode({self.kind.value}, {self.name!r}, size={self.size})"

    @property
    def is_dir(self) -> bool:
        return self.kind is VNodeKind.DIRECTORY

    @property
    def size(self) -> int:
        return len(self.data) if self.kind is VNodeKind.FILE else 0


class RamFS:
    """可读写的内存文件系统"""

    name = "ramfs"
    read_only = False

    def __init__(self):
        self.root_node = VNode(VNodeKind.DIRECTORY, "")

    def root(self) -> VNode:
        return self.root_node

    def lookup(self, directory: VNode, name: str) -> VNode:
        if not directory.is_dir:
            raise FsError(FsError.NOT_DIRECTORY, f"{directory.name!r} 不是目录")
        node = directory.data.get(name)
        if node is None:
            raise FsError(FsError.NOT_FOUND, f"{name!r} 不存在")
        return node

    def _add(self, directory: VNode, name: str, kind: VNodeKind) -> VNode:
        if not directory.is_dir:
            raise FsError(FsError.NOT_DIRECTORY, f"{directory.name!r} 不是目录")
        if name in directory.data:
            raise FsError(FsError.EXISTS, f"{name!r} 已存在")
        node = VNode(kind, name)
        directory.data[name] = node
        return node

    def create(self, directory: VNode, name: str) -> VNode:
        return self._add(directory, name, VNodeKind.FILE)

    def mkdir(self, directory: VNode, name: str) -> VNode:
        return self._add(directory, name, VNodeKind.DIRECTORY)

    def read(self, node: VNode, offset: int, n: int) -> bytes:
        return bytes(node.data[offset:offset + n])

    def write(self, node: VNode, offset: int, data: bytes) -> int:
        buf = node.data
        end = offset + len(data)
        if offset > len(buf):
            buf.extend(bytes(offset - len(buf)))
        buf[offset:end] = data
        return len(data)

    def truncate(self, node: VNode, size: int = 0) -> None:
        del node.data[size:]

    def listdir(self, directory: VNode) -> List[str]:
        if not directory.is_dir:
            raise FsError(FsError.NOT_DIRECTORY, f"{directory.name!r} 不是目录")
        return sorted(directory.data)

    def populate(self, files: Dict[str, bytes], directory: Optional[VNode] = None) -> None:
        """批量写入根目录下的文件"""
        directory = directory or self.root_node
        for name, data in files.items():
            node = directory.data.get(name) or self.create(directory, name)
            node.data[:] = data
        logger.debug(f"ramfs 写入 {len(files)} 个文件")
