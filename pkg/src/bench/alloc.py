"""分配器基准：初始化耗时、合成负载吞吐、堆内存准备耗时"""
import logging
import random
from enum import Enum
from typing import Any, Dict, Iterable, List, Optional

from tqdm import tqdm

from src.alloc.base import MIN_ALIGN, AllocatorHandle
from src.alloc.ukalloc import AllocatorRegistry, alloc_init, backend_kind
from src.bench.oracle import IntervalOracle
from src.bench.results import BenchResult, check_positive
from src.boot.platform import MemoryStrategy, monotonic_ns, provision_heap
from src.errors import AllocError, BenchError

logger = logging.getLogger(__name__)

MAX_LIVE = 256
CHURN_MAX = 4096
MIXED_MIN_EXP = 4
MIXED_MAX_EXP = 16


class Pattern(str, Enum):
    CHURN = "churn"
    RAMP = "ramp"
    MIXED = "mixed"


def bench_alloc_init(
    backends: Iterable[Any],
    heap_bytes: int,
    reps: int,
    *,
    warmup: int = 0,
    config: Optional[Dict[str, Any]] = None,
    progress: bool = False,
) -> List[BenchResult]:
    """测量各后端在同一大小的堆上的初始化耗时

    Args:
        backends: 后端列表
        heap_bytes: 堆大小
        reps: 计入结果的重复次数
        warmup: 丢弃的预热次数
        config: alloc 配置段

    Returns:
        List[BenchResult]: 每个后端一项，样本单位 ns
    """
    check_positive("reps", reps)
    check_positive("heap_bytes", heap_bytes)
    config = config or {}
    region = provision_heap(MemoryStrategy.ON_DEMAND.value, heap_bytes)
    results = []
    try:
        for backend in backends:
            kind = backend_kind(backend)
            samples: List[float] = []
            for i in tqdm(range(warmup + reps), desc=f"alloc-init {kind.value}", disable=not progress):
                handle = alloc_init(kind, 0, heap_bytes, region, config=config, debug=False, registry=AllocatorRegistry())
                if i >= warmup:
                    samples.append(float(handle.stats.init_ns))
            results.append(
                BenchResult("alloc_init", {"backend": kind.value, "heap_bytes": heap_bytes, "unit": "ns"}, samples)
            )
            logger.info(f"alloc-init {kind.value}: 中位数 {results[-1].median:.0f}ns")
    finally:
        region.close()
    return results


class _Workload:
    """在一个句柄上执行合成负载，内存不足记为失败而不中断"""

    def __init__(self, handle: AllocatorHandle, rng: random.Random, oracle: Optional[IntervalOracle]):
        self.handle = handle
        self.rng = rng
        self.oracle = oracle
        self.live: List[int] = []
        self.failures = 0
        self.first_failure: Optional[int] = None
        self.ops = 0

    def alloc(self, size: int) -> None:
        self.ops += 1
        try:
            block = self.handle.allocate(size)
        except AllocError as e:
            if e.code != AllocError.OUT_OF_MEMORY:
                raise
            self.failures += 1
            if self.first_failure is None:
                self.first_failure = self.ops
            return
        if self.oracle is not None:
            self.oracle.add(block, self.handle.usable_size(block), MIN_ALIGN)
        self.live.append(block)

    def free_at(self, index: int) -> None:
        self.ops += 1
        live = self.live
        live[index], live[-1] = live[-1], live[index]
        block = live.pop()
        if self.oracle is not None:
            self.oracle.remove(block)
        self.handle.release(block)

    def realloc_at(self, index: int, size: int) -> None:
        self.ops += 1
        block = self.live[index]
        try:
            new = self.handle.reallocate(block, size)
        except AllocError as e:
            if e.code != AllocError.OUT_OF_MEMORY:
                raise
            self.failures += 1
            return
        if self.oracle is not None:
            self.oracle.remove(block)
            self.oracle.add(new, self.handle.usable_size(new), MIN_ALIGN)
        self.live[index] = new

    def free_all(self) -> None:
        while self.live:
            self.free_at(len(self.live) - 1)


def _run_pattern(w: _Workload, pattern: Pattern, ops: int) -> None:
    rng = w.rng
    if pattern is Pattern.CHURN:
        while w.ops < ops:
            r = rng.random()
            if w.live and (len(w.live) >= MAX_LIVE or r < 0.45):
                w.free_at(rng.randrange(len(w.live)))
            elif w.live and r < 0.55:
                w.realloc_at(rng.randrange(len(w.live)), rng.randint(1, CHURN_MAX))
            else:
                w.alloc(rng.randint(1, CHURN_MAX))
    elif pattern is Pattern.RAMP:
        while w.ops < ops:
            failures = w.failures
            while w.ops < ops and len(w.live) < MAX_LIVE and w.failures == failures:
                w.alloc(rng.randint(1, CHURN_MAX))
            w.free_all()
    else:
        while w.ops < ops:
            if w.live and rng.random() >= 0.7:
                w.free_at(rng.randrange(len(w.live)))
            else:
                w.alloc(int(2 ** rng.uniform(MIXED_MIN_EXP, MIXED_MAX_EXP)))


def bench_alloc_workload(
    backend: Any,
    pattern: Any,
    ops: int,
    *,
    heap_bytes: int = 64 * 1024 * 1024,
    reps: int = 1,
    warmup: int = 0,
    seed: int = 0,
    check: bool = False,
    config: Optional[Dict[str, Any]] = None,
    progress: bool = False,
) -> BenchResult:
    """合成负载吞吐

    churn: 随机大小的分配/释放/调整交替，存活块数有上限；
    ramp: 连续分配到上限后全部释放；
    mixed: 70% 分配、30% 释放，大小在 16B 到 64KiB 之间按对数均匀分布。

    Args:
        backend: 后端
        pattern: 负载模式
        ops: 每次重复的操作数
        heap_bytes: 堆大小
        reps: 计入结果的重复次数，每次都用新的分配器
        warmup: 丢弃的预热次数
        seed: 随机种子
        check: 是否用区间校验器检查每一步

    Returns:
        BenchResult: 样本单位 ops/s，extra 中记录失败次数
    """
    check_positive("ops", ops)
    check_positive("reps", reps)
    try:
        pattern = Pattern(pattern)
    except ValueError:
        raise BenchError(BenchError.BAD_PARAMS, f"未知的负载模式: {pattern}")
    kind = backend_kind(backend)
    samples: List[float] = []
    failures: List[int] = []
    first_failure = None
    for i in tqdm(range(warmup + reps), desc=f"alloc-work {kind.value}/{pattern.value}", disable=not progress):
        rep = max(i - warmup, 0)
        handle = alloc_init(kind, 0, heap_bytes, config=config, registry=AllocatorRegistry())
        oracle = IntervalOracle(handle.heap_base, handle.heap_base + handle.heap_len, MIN_ALIGN) if check else None
        w = _Workload(handle, random.Random(seed + rep), oracle)
        start = monotonic_ns()
        _run_pattern(w, pattern, ops)
        elapsed = max(monotonic_ns() - start, 1)
        handle.region.close()
        if i < warmup:
            continue
        samples.append(w.ops * 1e9 / elapsed)
        failures.append(w.failures)
        if first_failure is None:
            first_failure = w.first_failure
    params = {"backend": kind.value, "pattern": pattern.value, "ops": ops, "unit": "ops/s"}
    result = BenchResult("alloc_work", params, samples, extra={"failures": failures, "first_failure": first_failure})
    if any(failures):
        logger.info(f"alloc-work {kind.value}/{pattern.value}: 内存不足 {sum(failures)} 次")
    return result


def bench_heap_provision(
    strategies: Iterable[Any],
    sizes: Iterable[int],
    reps: int,
    *,
    warmup: int = 0,
    touch: bool = False,
    progress: bool = False,
) -> List[BenchResult]:
    """堆内存准备耗时：prereserved 随大小增长，on_demand 基本不变

    touch 为真时，准备完成后再对整个堆逐页写一遍并单独计时，
    on_demand 的缺页开销落在这一遍里。

    Args:
        strategies: 内存策略列表
        sizes: 堆大小列表
        reps: 计入结果的重复次数
        warmup: 丢弃的预热次数
        touch: 是否测量首次写入

    Returns:
        List[BenchResult]: 每个 (策略, 大小) 一项 heap_provision，touch 时紧跟一项 heap_first_touch，样本单位 ns
    """
    check_positive("reps", reps)
    results = []
    for strategy in strategies:
        mode = MemoryStrategy(strategy)
        for size in sizes:
            check_positive("size", size)
            samples: List[float] = []
            touched: List[float] = []
            for i in tqdm(range(warmup + reps), desc=f"heap {mode.value}/{size}", disable=not progress):
                region = provision_heap(mode.value, size)
                try:
                    first_touch_ns = region.touch_pages() if touch else 0
                finally:
                    region.close()
                if i < warmup:
                    continue
                samples.append(float(region.provision_ns))
                touched.append(float(first_touch_ns))
            params = {"strategy": mode.value, "heap_bytes": size, "unit": "ns"}
            results.append(BenchResult("heap_provision", params, samples))
            if touch:
                results.append(BenchResult("heap_first_touch", dict(params), touched))
                logger.info(
                    f"heap {mode.value}/{size}: 准备 {results[-2].median:.0f}ns, 首次写入 {results[-1].median:.0f}ns"
                )
    return results
