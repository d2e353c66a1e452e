"""调用开销基准：直接调用、分派表调用、真实的宿主系统调用"""
import logging
import os
from typing import List

from tqdm import tqdm

from src.bench.results import BenchResult, check_positive
from src.boot.platform import monotonic_ns
from src.errors import BenchError
from src.syscall.shim import SyscallTable

logger = logging.getLogger(__name__)

# getpid 的号码，分派表中注册为空操作
NOOP_SYSNO = 39

HOST_CALLS = ("fstat", "getppid")


def _noop(a0: int = 0, a1: int = 0, a2: int = 0, a3: int = 0, a4: int = 0, a5: int = 0) -> int:
    return 0


def _time_direct(n: int) -> int:
    call = _noop
    start = monotonic_ns()
    for _ in range(n):
        call()
    return monotonic_ns() - start


def _time_shim(table: SyscallTable, n: int) -> int:
    dispatch = table.dispatch
    sysno = NOOP_SYSNO
    start = monotonic_ns()
    for _ in range(n):
        dispatch(sysno)
    return monotonic_ns() - start


def _time_host(n: int, host_call: str = "fstat") -> int:
    """连续 n 次真实的宿主系统调用

    fstat 进入内核并把结果复制回用户空间；getppid 只进出内核一次，不复制数据。
    """
    if host_call == "getppid":
        getppid = os.getppid
        start = monotonic_ns()
        for _ in range(n):
            getppid()
        return monotonic_ns() - start

    fd = os.open(os.devnull, os.O_RDONLY)
    trap = os.fstat
    try:
        start = monotonic_ns()
        for _ in range(n):
            trap(fd)
        return monotonic_ns() - start
    finally:
        os.close(fd)


def bench_dispatch(
    reps: int,
    invocations: int = 1_000_000,
    *,
    warmup: int = 1,
    host_call: str = "fstat",
    progress: bool = False,
) -> List[BenchResult]:
    """三种调用方式各自的单次耗时

    Args:
        reps: 计入结果的重复次数
        invocations: 每次重复的调用次数
        warmup: 丢弃的预热次数
        host_call: host_trap 使用的宿主调用，fstat 或 getppid

    Returns:
        List[BenchResult]: direct_call、shim_dispatch、host_trap，样本单位 ns/次；
            host_trap 的 params 中 host_call 记录所用的宿主调用
    """
    check_positive("reps", reps)
    check_positive("invocations", invocations)
    if host_call not in HOST_CALLS:
        raise BenchError(BenchError.BAD_PARAMS, f"未知的宿主调用: {host_call}")
    table = SyscallTable()
    table.register_handler(NOOP_SYSNO, _noop)

    samples = {"direct_call": [], "shim_dispatch": [], "host_trap": []}
    for i in tqdm(range(warmup + reps), desc="dispatch", disable=not progress):
        direct = _time_direct(invocations)
        shim = _time_shim(table, invocations)
        host = _time_host(invocations, host_call)
        if i < warmup:
            continue
        samples["direct_call"].append(direct / invocations)
        samples["shim_dispatch"].append(shim / invocations)
        samples["host_trap"].append(host / invocations)

    results = [
        BenchResult(name, {"invocations": invocations, "unit": "ns"}, values) for name, values in samples.items()
    ]
    results[-1].params["host_call"] = host_call
    logger.info("dispatch: " + ", ".join(f"{r.name}={r.median:.1f}ns" for r in results))
    return results
