"""SHFS 单元测试"""
import random

import pytest

from src.bench.fs import make_corpus
from src.errors import FsError
from src.fs.ramfs import RamFS
from src.fs.shfs import (
    MAGIC,
    ShfsFilesystem,
    bucket_count_for,
    fnv1a64,
    load,
    name_hash,
    save,
    shfs_build,
    shfs_deserialize,
    shfs_open,
    shfs_serialize,
)
from src.fs.vfs import VFS


@pytest.fixture(scope="module")
def corpus():
    """1000 个随机内容的文件"""
    return make_corpus(1000, seed=42)


@pytest.fixture(scope="module")
def image(corpus):
    return shfs_build(corpus)


def test_fnv1a64_known_values():
    """测试 FNV-1a 64 位哈希的标准值"""
    assert fnv1a64(b"") == 0xCBF29CE484222325
    assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C
    assert name_hash("a") == fnv1a64(b"a")


def test_bucket_count():
    """测试桶数为不小于两倍条目数的最小2的幂"""
    assert shfs_build([("a", b"1"), ("b", b"2"), ("c", b"3")]).bucket_count == 8
    assert bucket_count_for(0) == 1
    assert bucket_count_for(4) == 8
    assert bucket_count_for(5) == 16
    assert bucket_count_for(1000) == 2048


def test_duplicate_and_bad_names():
    """测试重复文件名和带目录的文件名"""
    with pytest.raises(FsError) as exc:
        shfs_build([("a", b"1"), ("a", b"2")])
    assert exc.value.code == FsError.DUPLICATE_NAME
    for bad in ("dir/a", ""):
        with pytest.raises(FsError) as exc:
            shfs_build([(bad, b"1")])
        assert exc.value.code == FsError.BAD_PATH


def test_entries_tile_blob(image):
    """测试条目在 blob 中首尾相接不重叠"""
    offset = 0
    for entry in image.entries:
        assert entry.offset == offset
        offset += entry.length
    assert offset == len(image.blob)


def test_open_matches_linear_scan(corpus, image):
    """测试直接打开与线性扫描的命中判定和内容一致"""
    contents = dict(corpus)
    names = list(contents)
    rng = random.Random(9)
    for i in range(10_000):
        r = rng.random()
        if r < 0.5:
            query = rng.choice(names)
        elif r < 0.75:
            # 近似名：改动一个字符
            base = rng.choice(names)
            pos = rng.randrange(len(base))
            query = base[:pos] + chr(ord(base[pos]) ^ 1) + base[pos + 1:]
        else:
            query = f"absent{i}.html"
        if query in contents:
            handle = shfs_open(image, query)
            assert handle.size == len(contents[query])
            assert handle.read() == contents[query]
        else:
            with pytest.raises(FsError) as exc:
                shfs_open(image, query)
            assert exc.value.code == FsError.NOT_FOUND
        assert image.last_chain_probes == 1


def test_handle_cursor(image, corpus):
    """测试直接访问句柄的游标"""
    name, data = corpus[0]
    handle = shfs_open(image, name)
    assert handle.read(10) == data[:10]
    assert handle.read() == data[10:]
    assert handle.read() == b""
    assert bytes(handle.data()) == data


def test_serialize_roundtrip(image, corpus, tmp_path):
    """测试序列化后查找结果不变"""
    raw = shfs_serialize(image)
    assert raw.startswith(MAGIC)
    restored = shfs_deserialize(raw)
    assert restored.bucket_count == image.bucket_count
    assert restored.entries == image.entries
    for name, data in corpus:
        assert restored.content(name) == data
    path = tmp_path / "root.shfs"
    assert save(image, path) == len(raw)
    assert shfs_serialize(load(path)) == raw


def test_deserialize_rejects_bad_images(image):
    """测试损坏的镜像"""
    raw = shfs_serialize(image)
    bad = [b"NOPE!" + raw[5:], raw[:40], raw[:5] + (3).to_bytes(4, "little") + raw[9:], raw[:-10]]
    for data in bad:
        with pytest.raises(FsError) as exc:
            shfs_deserialize(data)
        assert exc.value.code == FsError.BAD_IMAGE


def test_load_missing(tmp_path):
    """测试加载不存在的镜像文件"""
    with pytest.raises(FsError) as exc:
        load(tmp_path / "none.shfs")
    assert exc.value.code == FsError.NOT_FOUND


def test_vfs_and_bypass_see_same_bytes(image, corpus):
    """测试经 VFS 打开与直接打开得到相同内容"""
    vfs = VFS()
    vfs.mount(RamFS(), "/")
    vfs.mkdir("/www")
    vfs.mount(ShfsFilesystem(image), "/www")
    for name, data in corpus[:50]:
        h = vfs.open(f"/www/{name}")
        assert vfs.read(h) == shfs_open(image, name).read() == data
        vfs.close(h)
    with pytest.raises(FsError) as exc:
        vfs.open("/www/missing.html")
    assert exc.value.code == FsError.NOT_FOUND
