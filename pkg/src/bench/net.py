"""突发批量收发基准：回环设备上不同突发大小的包速率"""
import logging
from typing import Any, Dict, Iterable, List, Optional

from tqdm import tqdm

from src.alloc.ukalloc import AllocatorRegistry, alloc_init
from src.bench.results import BenchResult, check_positive
from src.boot.platform import monotonic_ns
from src.netdev.device import Direction
from src.netdev.loopback import loopback_pair
from src.netdev.netbuf import NetBuf, NetBufPool

logger = logging.getLogger(__name__)

PAYLOAD = 64
POOL_HEAP = 16 * 1024 * 1024


def _setup(config: Dict[str, Any], capacity: int):
    a, b = loopback_pair(config, ("bench0", "bench1"))
    for dev in (a, b):
        dev.configure(1, 1)
        dev.queue_configure(Direction.TX, 0, capacity)
        dev.queue_configure(Direction.RX, 0, capacity)
        dev.start()
    return a, b


def measure_batch(batch: int, duration: float, config: Optional[Dict[str, Any]] = None, capacity: int = 256) -> Dict[str, Any]:
    """在一对回环设备上以固定突发大小收发 duration 秒

    Returns:
        Dict[str, Any]: packets（收到的包数）、elapsed_ns、max_tx（单次最多入队数）
    """
    check_positive("batch", batch)
    check_positive("duration", duration)
    config = dict(config or {})
    config["debug"] = False
    a, b = _setup(config, capacity)
    handle = alloc_init("tlsf", 0, POOL_HEAP, registry=AllocatorRegistry())
    pool = NetBufPool(handle, batch, PAYLOAD)
    hand: List[NetBuf] = pool.get_many(batch)
    for buf in hand:
        buf.set_payload(bytes(PAYLOAD))

    tx = a.tx_burst
    rx = b.rx_burst
    got: List[NetBuf] = []
    packets = 0
    max_tx = 0
    deadline = monotonic_ns() + int(duration * 1e9)
    start = monotonic_ns()
    now = start
    while now < deadline:
        sent = tx(0, hand, batch).count
        if sent > max_tx:
            max_tx = sent
        rx(0, got, batch)
        packets += len(got)
        hand = hand[sent:] + got
        now = monotonic_ns()
    elapsed = now - start
    a.close()
    b.close()
    handle.region.close()
    return {"packets": packets, "elapsed_ns": elapsed, "max_tx": max_tx}


def bench_net_batch(
    batch_sizes: Iterable[int],
    duration: float,
    *,
    reps: int = 1,
    warmup: int = 0,
    config: Optional[Dict[str, Any]] = None,
    progress: bool = False,
) -> List[BenchResult]:
    """每个突发大小一项结果，样本单位 pkts/s

    Args:
        batch_sizes: 突发大小列表
        duration: 每次测量的秒数
        reps: 计入结果的重复次数
        warmup: 丢弃的预热次数
        config: netdev 配置段
    """
    check_positive("duration", duration)
    check_positive("reps", reps)
    capacity = (config or {}).get("queue_capacity", 256)
    results = []
    for batch in batch_sizes:
        samples: List[float] = []
        max_tx = 0
        for i in tqdm(range(warmup + reps), desc=f"net-batch {batch}", disable=not progress):
            m = measure_batch(batch, duration, config, capacity)
            if i < warmup:
                continue
            samples.append(m["packets"] * 1e9 / max(m["elapsed_ns"], 1))
            max_tx = max(max_tx, m["max_tx"])
        results.append(
            BenchResult(
                "net_batch",
                {"batch": batch, "duration": duration, "unit": "pkts/s"},
                samples,
                extra={"max_tx": max_tx, "capacity": capacity},
            )
        )
        logger.info(f"net-batch {batch}: 中位数 {results[-1].median:.0f} pkts/s")
    return results
