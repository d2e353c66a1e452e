"""文件打开基准：经 VFS 路径解析打开 vs 直接调用 SHFS

先用线性扫描校验两条路径对命中和未命中的判定一致，再按判定分成两组分别计时。
"""
import logging
import random
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from src.bench.results import BenchResult, check_positive
from src.boot.platform import monotonic_ns
from src.errors import BenchError, FsError
from src.fs.ramfs import RamFS
from src.fs.shfs import ShfsFilesystem, ShfsImage, name_hash, shfs_build, shfs_open
from src.fs.vfs import VFS, OpenFlags

logger = logging.getLogger(__name__)

MOUNT_POINT = "/www"


def make_corpus(size: int, seed: int = 0) -> List[Tuple[str, bytes]]:
    """size 个小文件，名称形如 page00042.html"""
    rng = random.Random(seed)
    return [(f"page{i:05d}.html", rng.randbytes(rng.randint(64, 512))) for i in range(size)]


def make_queries(names: List[str], count: int, hit_ratio: float = 0.5, seed: int = 0) -> List[str]:
    rng = random.Random(seed + 1)
    queries = []
    for i in range(count):
        if rng.random() < hit_ratio:
            queries.append(rng.choice(names))
        else:
            queries.append(f"missing{i:06d}.html")
    return queries


def build_stack(corpus: List[Tuple[str, bytes]]) -> Tuple[VFS, ShfsImage]:
    """根目录挂 RamFS，MOUNT_POINT 挂 SHFS 镜像"""
    image = shfs_build(corpus)
    vfs = VFS()
    vfs.mount(RamFS(), "/")
    vfs.mkdir(MOUNT_POINT)
    vfs.mount(ShfsFilesystem(image), MOUNT_POINT)
    return vfs, image


def vfs_opener(vfs: VFS) -> Callable[[str], bool]:
    prefix = MOUNT_POINT + "/"
    flags = OpenFlags.READ

    def open_via_vfs(name: str) -> bool:
        try:
            handle = vfs.open(prefix + name, flags)
        except FsError as e:
            if e.code != FsError.NOT_FOUND:
                raise
            return False
        vfs.close(handle)
        return True

    return open_via_vfs


def shfs_opener(image: ShfsImage) -> Callable[[str], bool]:
    def open_direct(name: str) -> bool:
        try:
            shfs_open(image, name)
        except FsError as e:
            if e.code != FsError.NOT_FOUND:
                raise
            return False
        return True

    return open_direct


def verify_verdicts(names: List[str], queries: List[str], *openers: Callable[[str], bool]) -> List[bool]:
    """每条路径的命中判定都必须与线性扫描一致"""
    expected = [q in names for q in queries]
    for opener in openers:
        got = [opener(q) for q in queries]
        if got != expected:
            bad = next(i for i, (g, e) in enumerate(zip(got, expected)) if g != e)
            raise BenchError(BenchError.MISMATCH, f"查询 {queries[bad]!r} 判定不一致: {got[bad]} != {expected[bad]}")
    return expected


def _time(opener: Callable[[str], bool], queries: List[str]) -> int:
    """依次打开 queries，返回总耗时（纳秒）；每次计时前清空文件名哈希缓存"""
    name_hash.cache_clear()
    start = monotonic_ns()
    for q in queries:
        opener(q)
    return monotonic_ns() - start


def _median(values: List[float]) -> Optional[float]:
    return float(np.median(values)) if values else None


def bench_fs_open(
    corpus_size: int,
    queries: int,
    *,
    reps: int = 1,
    hit_ratio: float = 0.5,
    seed: int = 0,
    warmup: int = 1,
    progress: bool = False,
) -> List[BenchResult]:
    """两条路径的平均打开耗时，命中和未命中分开计时

    Args:
        corpus_size: 文件个数
        queries: 每次重复的查询个数，命中和未命中混合
        reps: 计入结果的重复次数
        hit_ratio: 命中比例
        warmup: 丢弃的预热次数

    Returns:
        List[BenchResult]: vfs_path、shfs_bypass，样本单位 ns/次；
            extra 中 hit_mean_ns、miss_mean_ns 为两类查询各自平均耗时的中位数，没有该类查询时为 None
    """
    check_positive("corpus_size", corpus_size)
    check_positive("queries", queries)
    check_positive("reps", reps)
    corpus = make_corpus(corpus_size, seed)
    names = [n for n, _ in corpus]
    qs = make_queries(names, queries, hit_ratio, seed)
    vfs, image = build_stack(corpus)
    openers = {"vfs_path": vfs_opener(vfs), "shfs_bypass": shfs_opener(image)}
    verdicts = verify_verdicts(names, qs, *openers.values())
    hit_qs = [q for q, hit in zip(qs, verdicts) if hit]
    miss_qs = [q for q, hit in zip(qs, verdicts) if not hit]

    samples: Dict[str, List[float]] = {name: [] for name in openers}
    hit_samples: Dict[str, List[float]] = {name: [] for name in openers}
    miss_samples: Dict[str, List[float]] = {name: [] for name in openers}
    for i in tqdm(range(warmup + reps), desc="fs-open", disable=not progress):
        for name, opener in openers.items():
            hit_ns = _time(opener, hit_qs)
            miss_ns = _time(opener, miss_qs)
            if i < warmup:
                continue
            samples[name].append((hit_ns + miss_ns) / len(qs))
            if hit_qs:
                hit_samples[name].append(hit_ns / len(hit_qs))
            if miss_qs:
                miss_samples[name].append(miss_ns / len(miss_qs))

    params = {"corpus": corpus_size, "queries": queries, "unit": "ns"}
    results = [
        BenchResult(
            name,
            dict(params),
            samples[name],
            extra={
                "hits": len(hit_qs),
                "misses": len(miss_qs),
                "hit_mean_ns": _median(hit_samples[name]),
                "miss_mean_ns": _median(miss_samples[name]),
                "hit_samples": hit_samples[name],
                "miss_samples": miss_samples[name],
            },
        )
        for name in openers
    ]
    logger.info("fs-open: " + ", ".join(f"{r.name}={r.median:.0f}ns" for r in results))
    return results
