"""SHFS：基于哈希的只读文件系统

扁平命名空间，文件名经 FNV-1a 64 位哈希落到桶中，桶内按插入顺序
成链，查找时逐个比较全名。所有文件内容连续存放在一个 blob 里。
应用既可以经 VFS 访问，也可以直接调用 shfs_open 绕过路径解析。

镜像格式（小端）：
    b"SHFS1" | bucket_count u32 | entry_count u32 |
    entry_count × (name_hash u64, name_len u16, name, offset u64, length u64) | blob
"""
import logging
import struct
from functools import lru_cache
from pathlib import Path
from typing import Iterable, List, NamedTuple, Optional, Tuple, Union

from src.errors import FsError
from src.fs.ramfs import VNodeKind

logger = logging.getLogger(__name__)

MAGIC = b"SHFS1"
FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
MASK64 = 0xFFFFFFFFFFFFFFFF

_HEADER = struct.Struct("<5sII")
_ENTRY_HEAD = struct.Struct("<QH")
_ENTRY_TAIL = struct.Struct("<QQ")


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for b in data:
        h = ((h ^ b) * FNV_PRIME) & MASK64
    return h


@lru_cache(maxsize=1 << 16)
def name_hash(name: str) -> int:
    """文件名的 FNV-1a 哈希，按名称缓存"""
    return fnv1a64(name.encode("utf-8"))


class ShfsEntry(NamedTuple):
    name_hash: int
    name: str
    offset: int
    length: int


class ShfsHandle:
    """直接访问句柄，带独立游标"""

    __slots__ = ("entry", "image", "cursor")

    def __init__(self, image: "ShfsImage", entry: ShfsEntry):
        self.image = image
        self.entry = entry
        self.cursor = 0

    @property
    def name(self) -> str:
        return self.entry.name

    @property
    def size(self) -> int:
        return self.entry.length

    def data(self) -> memoryview:
        e = self.entry
        return self.image.blob_view[e.offset:e.offset + e.length]

    def read(self, n: int = -1) -> bytes:
        e = self.entry
        remaining = e.length - self.cursor
        if n < 0 or n > remaining:
            n = remaining
        start = e.offset + self.cursor
        self.cursor += n
        return bytes(self.image.blob_view[start:start + n])


class ShfsImage:
    """SHFS 镜像"""

    def __init__(self, bucket_count: int, entries: List[ShfsEntry], blob: bytes):
        self.bucket_count = bucket_count
        self.entries = entries
        self.blob = blob
        self.blob_view = memoryview(blob)
        self.mask = bucket_count - 1
        self.buckets: List[List[ShfsEntry]] = [[] for _ in range(bucket_count)]
        for entry in entries:
            self.buckets[entry.name_hash & self.mask].append(entry)
        self.last_chain_probes = 0

    def __len__(self) -> int:
        return len(self.entries)

    def __repr__(self) -> str:
        return f"ShfsImage(entries={len(self.entries)}, buckets={self.bucket_count}, blob={len(self.blob)})"

    def lookup(self, name: str) -> Optional[ShfsEntry]:
        """一次哈希、一个桶链、逐项比较全名"""
        h = name_hash(name)
        chain = self.buckets[h & self.mask]
        self.last_chain_probes = 1
        for entry in chain:
            if entry.name_hash == h and entry.name == name:
                return entry
        return None

    def open(self, name: str) -> ShfsHandle:
        entry = self.lookup(name)
        if entry is None:
            raise FsError(FsError.NOT_FOUND, f"{name!r} 不存在")
        return ShfsHandle(self, entry)

    def names(self) -> List[str]:
        return [e.name for e in self.entries]

    def content(self, name: str) -> bytes:
        entry = self.lookup(name)
        if entry is None:
            raise FsError(FsError.NOT_FOUND, f"{name!r} 不存在")
        return bytes(self.blob_view[entry.offset:entry.offset + entry.length])


def bucket_count_for(entry_count: int) -> int:
    """不小于 2×条目数 的最小2的幂"""
    need = max(2 * entry_count, 1)
    return 1 << (need - 1).bit_length()


def shfs_build(inputs: Iterable[Tuple[str, bytes]]) -> ShfsImage:
    """由 (名称, 内容) 列表构建镜像

    Args:
        inputs: 文件列表，名称不得重复、不得包含 "/"

    Returns:
        ShfsImage: 镜像
    """
    entries: List[ShfsEntry] = []
    seen = set()
    blob = bytearray()
    for name, data in inputs:
        if name in seen:
            raise FsError(FsError.DUPLICATE_NAME, f"文件名重复: {name!r}")
        if not name or "/" in name:
            raise FsError(FsError.BAD_PATH, f"SHFS 只支持根目录下的文件名: {name!r}")
        seen.add(name)
        entries.append(ShfsEntry(fnv1a64(name.encode("utf-8")), name, len(blob), len(data)))
        blob += data
    image = ShfsImage(bucket_count_for(len(entries)), entries, bytes(blob))
    logger.debug(f"SHFS 镜像构建完成: {image!r}")
    return image


def shfs_open(img: ShfsImage, name: str) -> ShfsHandle:
    """绕过 VFS 直接打开文件"""
    return img.open(name)


def shfs_serialize(img: ShfsImage) -> bytes:
    parts = [_HEADER.pack(MAGIC, img.bucket_count, len(img.entries))]
    for entry in img.entries:
        raw = entry.name.encode("utf-8")
        parts.append(_ENTRY_HEAD.pack(entry.name_hash, len(raw)))
        parts.append(raw)
        parts.append(_ENTRY_TAIL.pack(entry.offset, entry.length))
    parts.append(img.blob)
    return b"".join(parts)


def shfs_deserialize(data: bytes) -> ShfsImage:
    """解析镜像，格式错误时报 bad_image"""
    try:
        magic, bucket_count, entry_count = _HEADER.unpack_from(data, 0)
        if magic != MAGIC:
            raise FsError(FsError.BAD_IMAGE, f"魔数错误: {magic!r}")
        if bucket_count <= 0 or bucket_count & (bucket_count - 1):
            raise FsError(FsError.BAD_IMAGE, f"桶数不是2的幂: {bucket_count}")
        pos = _HEADER.size
        entries: List[ShfsEntry] = []
        for _ in range(entry_count):
            name_hash, name_len = _ENTRY_HEAD.unpack_from(data, pos)
            pos += _ENTRY_HEAD.size
            raw = bytes(data[pos:pos + name_len])
            if len(raw) != name_len:
                raise FsError(FsError.BAD_IMAGE, "条目表被截断")
            pos += name_len
            offset, length = _ENTRY_TAIL.unpack_from(data, pos)
            pos += _ENTRY_TAIL.size
            entries.append(ShfsEntry(name_hash, raw.decode("utf-8"), offset, length))
    except (struct.error, UnicodeDecodeError) as e:
        raise FsError(FsError.BAD_IMAGE, f"镜像格式错误: {e}")
    blob = bytes(data[pos:])
    for entry in entries:
        if entry.offset + entry.length > len(blob):
            raise FsError(FsError.BAD_IMAGE, f"条目 {entry.name!r} 超出 blob 范围")
    return ShfsImage(bucket_count, entries, blob)


def save(img: ShfsImage, path: Union[str, Path]) -> int:
    data = shfs_serialize(img)
    Path(path).write_bytes(data)
    return len(data)


def load(path: Union[str, Path]) -> ShfsImage:
    try:
        data = Path(path).read_bytes()
    except FileNotFoundError:
        raise FsError(FsError.NOT_FOUND, f"镜像文件不存在: {path}")
    return shfs_deserialize(data)


class ShfsNode:
    """SHFS 在 VFS 中的节点"""

    __slots__ = ("kind", "name", "entry")

    def __init__(self, kind: VNodeKind, name: str, entry: Optional[ShfsEntry] = None):
        self.kind = kind
        self.name = name
        self.entry = entry

    @property
    def is_dir(self) -> bool:
        return self.kind is VNodeKind.DIRECTORY

    @property
    def size(self) -> int:
        return self.entry.length if self.entry else 0


class ShfsFilesystem:
    """把 SHFS 镜像挂进 VFS 的适配器，查找与直接访问共用同一实现"""

    name = "shfs"
    read_only = True

    def __init__(self, image: ShfsImage):
        self.image = image
        self.root_node = ShfsNode(VNodeKind.DIRECTORY, "")

    def root(self) -> ShfsNode:
        return self.root_node

    def lookup(self, directory: ShfsNode, name: str) -> ShfsNode:
        if directory is not self.root_node:
            raise FsError(FsError.NOT_DIRECTORY, f"{directory.name!r} 不是目录")
        entry = self.image.lookup(name)
        if entry is None:
            raise FsError(FsError.NOT_FOUND, f"{name!r} 不存在")
        return ShfsNode(VNodeKind.FILE, name, entry)

    def create(self, directory: ShfsNode, name: str) -> ShfsNode:
        raise FsError(FsError.READ_ONLY_FS, "SHFS 只读")

    def mkdir(self, directory: ShfsNode, name: str) -> ShfsNode:
        raise FsError(FsError.READ_ONLY_FS, "SHFS 只读")

    def read(self, node: ShfsNode, offset: int, n: int) -> bytes:
        e = node.entry
        end = min(offset + n, e.length)
        return bytes(self.image.blob_view[e.offset + offset:e.offset + end])

    def write(self, node: ShfsNode, offset: int, data: bytes) -> int:
        raise FsError(FsError.READ_ONLY_FS, "SHFS 只读")

    def truncate(self, node: ShfsNode, size: int = 0) -> None:
        raise FsError(FsError.READ_ONLY_FS, "SHFS 只读")

    def listdir(self, directory: ShfsNode) -> List[str]:
        if directory is not self.root_node:
            raise FsError(FsError.NOT_DIRECTORY, f"{directory.name!r} 不是目录")
        return sorted(self.image.names())
