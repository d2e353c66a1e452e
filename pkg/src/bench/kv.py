"""UDP 风格的内存键值服务，分层与专用化两种实现

分层模式逐包经过系统调用分派：recvfrom、每包分配缓冲区的 sendto，
SET 请求经 write 追加到 RamFS 上的日志文件。专用化模式直接使用
突发收发、轮询模式和预分配的缓冲区池，存储为一张字典。

客户端和服务端是同一个事件循环中的两个任务，队列没有工作时互相让出。
两种模式对同一请求流必须产生逐字节相同的响应流。
"""
import asyncio
import errno
import hashlib
import logging
import os
import random
import struct
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Any, Dict, List, Optional, Tuple

from tqdm import tqdm

from src.alloc.base import AllocatorHandle
from src.alloc.ukalloc import AllocatorRegistry, alloc_init
from src.bench.results import BenchResult, check_positive
from src.boot.platform import monotonic_ns
from src.errors import BenchError
from src.fs.ramfs import RamFS
from src.fs.vfs import VFS
from src.netdev.device import Direction, NetDevice
from src.netdev.loopback import loopback_pair
from src.netdev.netbuf import NetBuf, NetBufPool, netbuf_free
from src.syscall.shim import Sysno, UserMemory, bind_default_table

logger = logging.getLogger(__name__)

MAX_KEY = 64
MAX_VALUE = 1024
MAX_DATAGRAM = 2048
KV_HEAP = 32 * 1024 * 1024
LOG_PATH = "/kv.log"

_HEAD = struct.Struct("!BB")
_VLEN = struct.Struct("!H")


class KvOp(IntEnum):
    GET = 0
    SET = 1


class Mode(str, Enum):
    LAYERED = "layered"
    SPECIALIZED = "specialized"


MODES = (Mode.LAYERED.value, Mode.SPECIALIZED.value)


@dataclass(frozen=True)
class KvMessage:
    """键值消息：[op u8][key_len u8][key][val_len u16][value]"""

    op: KvOp
    key: bytes
    value: bytes = b""

    def encode(self) -> bytes:
        if len(self.key) > MAX_KEY or len(self.value) > MAX_VALUE:
            raise BenchError(BenchError.MALFORMED, f"键或值过长: {len(self.key)}/{len(self.value)}")
        return b"".join((_HEAD.pack(self.op, len(self.key)), self.key, _VLEN.pack(len(self.value)), self.value))

    @classmethod
    def decode(cls, data: Any) -> "KvMessage":
        """解码，长度不符、操作码未知或超长时报 malformed"""
        n = len(data)
        if n < _HEAD.size + _VLEN.size:
            raise BenchError(BenchError.MALFORMED, f"消息过短: {n}")
        op, key_len = _HEAD.unpack_from(data, 0)
        if op not in (KvOp.GET, KvOp.SET) or key_len > MAX_KEY:
            raise BenchError(BenchError.MALFORMED, f"非法的消息头: op={op}, key_len={key_len}")
        pos = _HEAD.size + key_len
        if pos + _VLEN.size > n:
            raise BenchError(BenchError.MALFORMED, "键被截断")
        (val_len,) = _VLEN.unpack_from(data, pos)
        if val_len > MAX_VALUE or pos + _VLEN.size + val_len != n:
            raise BenchError(BenchError.MALFORMED, f"值长度不符: {val_len}")
        start = pos + _VLEN.size
        return cls(KvOp(op), bytes(data[_HEAD.size:pos]), bytes(data[start:start + val_len]))


def is_valid(data: bytes) -> bool:
    try:
        KvMessage.decode(data)
    except BenchError:
        return False
    return True


def make_requests(count: int, seed: int = 0, keyspace: int = 1024, malformed_ratio: float = 0.0) -> List[bytes]:
    """固定种子的请求流，GET/SET 各半，可混入畸形报文"""
    rng = random.Random(seed)
    out = []
    for _ in range(count):
        key = f"key{rng.randrange(keyspace)}".encode()
        if rng.random() < 0.5:
            msg = KvMessage(KvOp.SET, key, rng.randbytes(rng.randint(8, 128)))
        else:
            msg = KvMessage(KvOp.GET, key)
        data = msg.encode()
        if malformed_ratio and rng.random() < malformed_ratio:
            # 截掉最后一个字节或破坏操作码，两者都不可能解码成功
            data = data[:-1] if rng.random() < 0.5 else bytes([0xFF]) + data[1:]
        out.append(data)
    return out


class KvStore:
    """键值表"""

    def __init__(self):
        self.table: Dict[bytes, bytes] = {}

    def apply(self, msg: KvMessage) -> bytes:
        if msg.op is KvOp.SET:
            self.table[msg.key] = msg.value
            return KvMessage(KvOp.SET, msg.key).encode()
        return KvMessage(KvOp.GET, msg.key, self.table.get(msg.key, b"")).encode()


@dataclass
class KvOutcome:
    mode: str
    responses: List[bytes] = field(default_factory=list)
    failures: int = 0
    served: int = 0
    elapsed_ns: int = 0
    log_bytes: int = 0

    @property
    def digest(self) -> str:
        h = hashlib.sha256()
        for r in self.responses:
            h.update(_VLEN.pack(len(r)))
            h.update(r)
        return h.hexdigest()

    @property
    def ops_per_sec(self) -> float:
        return self.served * 1e9 / max(self.elapsed_ns, 1)


class _Done:
    def __init__(self):
        self.flag = False


async def _client(dev: NetDevice, pool: NetBufPool, requests: List[bytes], expected: int, outcome: KvOutcome, done: _Done, window: int) -> None:
    i = 0
    got: List[NetBuf] = []
    responses = outcome.responses
    while i < len(requests) or len(responses) < expected:
        if i < len(requests):
            bufs = pool.get_many(min(window, len(requests) - i))
            for buf, data in zip(bufs, requests[i:]):
                buf.set_payload(data)
            sent = dev.tx_burst(0, bufs).count if bufs else 0
            for buf in bufs[sent:]:
                netbuf_free(buf)
            i += sent
        dev.rx_burst(0, got, window)
        for buf in got:
            responses.append(buf.tobytes())
            netbuf_free(buf)
        await asyncio.sleep(0)
    done.flag = True


async def _serve_specialized(dev: NetDevice, pool: NetBufPool, outcome: KvOutcome, done: _Done, burst: int) -> None:
    store = KvStore()
    rx: List[NetBuf] = []
    out: List[NetBuf] = []
    decode = KvMessage.decode
    while not done.flag:
        dev.rx_burst(0, rx, burst)
        for pkt in rx:
            try:
                msg = decode(pkt.payload())
            except BenchError:
                outcome.failures += 1
                netbuf_free(pkt)
                continue
            resp = pool.get()
            resp.set_payload(store.apply(msg))
            out.append(resp)
            netbuf_free(pkt)
            outcome.served += 1
        while out:
            sent = dev.tx_burst(0, out).count
            del out[:sent]
            if out:
                await asyncio.sleep(0)
        await asyncio.sleep(0)


async def _serve_layered(table, memory: UserMemory, alloc: AllocatorHandle, outcome: KvOutcome, done: _Done) -> None:
    store = KvStore()
    rx_addr = alloc.allocate(MAX_DATAGRAM)
    tx_addr = alloc.allocate(MAX_DATAGRAM)
    path_addr = alloc.allocate(len(LOG_PATH) + 1)
    memory.write_cstring(path_addr, LOG_PATH)
    log_fd = table.dispatch(Sysno.OPEN, path_addr, os.O_WRONLY | os.O_CREAT | os.O_APPEND, 0o644)
    if log_fd < 0:
        raise BenchError(BenchError.MISMATCH, f"无法打开日志 {LOG_PATH}: {log_fd}")
    dispatch = table.dispatch
    try:
        while not done.flag:
            n = dispatch(Sysno.RECVFROM, 0, rx_addr, MAX_DATAGRAM)
            if n < 0:
                await asyncio.sleep(0)
                continue
            try:
                msg = KvMessage.decode(memory.read(rx_addr, n))
            except BenchError:
                outcome.failures += 1
                continue
            if msg.op is KvOp.SET:
                outcome.log_bytes += dispatch(Sysno.WRITE, log_fd, rx_addr, n)
            resp = store.apply(msg)
            memory.write(tx_addr, resp)
            while True:
                ret = dispatch(Sysno.SENDTO, 0, tx_addr, len(resp))
                if ret != -errno.EAGAIN:
                    break
                await asyncio.sleep(0)
            if ret < 0:
                raise BenchError(BenchError.MISMATCH, f"sendto 失败: {ret}")
            outcome.served += 1
    finally:
        dispatch(Sysno.CLOSE, log_fd)
        for block in (rx_addr, tx_addr, path_addr):
            alloc.release(block)


def _pair(config: Dict[str, Any], capacity: int) -> Tuple[NetDevice, NetDevice]:
    client, server = loopback_pair(config, ("kv-client", "kv-server"))
    for dev in (client, server):
        dev.configure(1, 1)
        dev.queue_configure(Direction.TX, 0, capacity)
        dev.queue_configure(Direction.RX, 0, capacity)
        dev.start()
    return client, server


async def serve_kv(
    mode: str,
    requests: List[bytes],
    *,
    config: Optional[Dict[str, Any]] = None,
    alloc: Optional[AllocatorHandle] = None,
) -> KvOutcome:
    """在回环设备对上跑完一条请求流

    Args:
        mode: layered 或 specialized
        requests: 编码后的请求报文
        config: netdev 配置段，另可包含 window（客户端在途上限）
        alloc: 缓冲区和用户内存所在的分配器，缺省新建一个 TLSF 堆

    Returns:
        KvOutcome: 响应流、解码失败数和服务耗时
    """
    if mode not in MODES:
        raise BenchError(BenchError.BAD_PARAMS, f"未知的模式: {mode}")
    mode = Mode(mode)
    config = config or {}
    capacity = config.get("queue_capacity", 256)
    burst = config.get("max_burst", 64)
    window = config.get("window", 64)
    own_heap = alloc is None
    if own_heap:
        alloc = alloc_init("tlsf", 0, KV_HEAP, registry=AllocatorRegistry())

    client_dev, server_dev = _pair(config, capacity)
    client_pool = NetBufPool(alloc, window, MAX_DATAGRAM)
    expected = sum(1 for r in requests if is_valid(r))
    outcome = KvOutcome(mode.value)
    done = _Done()

    if mode is Mode.SPECIALIZED:
        server_pool = NetBufPool(alloc, capacity + 2 * burst, MAX_DATAGRAM)
        server = _serve_specialized(server_dev, server_pool, outcome, done, burst)
    else:
        server_pool = None
        vfs = VFS()
        vfs.mount(RamFS(), "/")
        memory = UserMemory(alloc.region.view)
        table = bind_default_table(vfs, server_dev, monotonic_ns, memory, net_source=alloc)
        server = _serve_layered(table, memory, alloc, outcome, done)

    start = monotonic_ns()
    await asyncio.gather(_client(client_dev, client_pool, requests, expected, outcome, done, window), server)
    outcome.elapsed_ns = monotonic_ns() - start

    client_pool.destroy()
    if server_pool is not None:
        server_pool.destroy()
    client_dev.close()
    server_dev.close()
    if own_heap:
        alloc.region.close()
    logger.debug(f"kv {mode.value}: 服务 {outcome.served} 个请求, 畸形 {outcome.failures} 个, {outcome.elapsed_ns}ns")
    return outcome


def run_kv(mode: str, requests: List[bytes], **kwargs: Any) -> KvOutcome:
    return asyncio.run(serve_kv(mode, requests, **kwargs))


def kv_demo(
    mode: str,
    requests: int,
    *,
    reps: int = 1,
    warmup: int = 0,
    seed: int = 0,
    malformed_ratio: float = 0.0,
    config: Optional[Dict[str, Any]] = None,
    progress: bool = False,
) -> BenchResult:
    """某一模式的键值服务吞吐，样本单位 ops/s

    前 warmup 次运行只用来预热，不计入样本。
    """
    if mode not in MODES:
        raise BenchError(BenchError.BAD_PARAMS, f"未知的模式: {mode}")
    mode = Mode(mode).value
    check_positive("requests", requests)
    check_positive("reps", reps)
    stream = make_requests(requests, seed, malformed_ratio=malformed_ratio)
    samples: List[float] = []
    outcome = None
    for i in tqdm(range(warmup + reps), desc=f"kv {mode}", disable=not progress):
        outcome = run_kv(mode, stream, config=config)
        if i >= warmup:
            samples.append(outcome.ops_per_sec)
    return BenchResult(
        "kv_demo",
        {"mode": mode, "requests": requests, "unit": "ops/s"},
        samples,
        extra={"failures": outcome.failures, "digest": outcome.digest, "served": outcome.served},
    )


def kv_compare(
    requests: int,
    *,
    reps: int = 1,
    warmup: int = 0,
    seed: int = 0,
    malformed_ratio: float = 0.0,
    config: Optional[Dict[str, Any]] = None,
    progress: bool = False,
) -> List[BenchResult]:
    """先确认两种模式的响应流逐字节相同，再分别计时"""
    check_positive("requests", requests)
    stream = make_requests(requests, seed, malformed_ratio=malformed_ratio)
    layered = run_kv(Mode.LAYERED, stream, config=config)
    specialized = run_kv(Mode.SPECIALIZED, stream, config=config)
    if layered.responses != specialized.responses:
        raise BenchError(
            BenchError.MISMATCH,
            f"两种模式的响应流不一致: {len(layered.responses)} vs {len(specialized.responses)}",
        )
    return [
        kv_demo(
            mode,
            requests,
            reps=reps,
            warmup=warmup,
            seed=seed,
            malformed_ratio=malformed_ratio,
            config=config,
            progress=progress,
        )
        for mode in MODES
    ]
