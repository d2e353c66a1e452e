"""示例应用

每个应用是一个以 BootContext 为参数、返回退出码的 main。
组合结果决定传入的上下文里有什么：helloworld 没有分配器和调度器，
netserver 在有调度器时以两个线程运行，kvstore 以轮询模式跑专用化的键值服务。
"""
import logging
from typing import Any, Callable, Dict, List

from src.boot.boot import BootContext
from src.errors import BootError
from src.netdev.device import Direction
from src.netdev.loopback import loopback_pair
from src.netdev.netbuf import NetBuf, NetBufPool, netbuf_free
from src.sched.lock import make_mutex
from src.syscall.shim import Sysno, SyscallTable, UserMemory, bind_default_table

logger = logging.getLogger(__name__)

HELLO = "Hello world!\n"


def _console_table(ctx: BootContext) -> SyscallTable:
    kwargs: Dict[str, Any] = {}
    if ctx.extras.get("console") is not None:
        kwargs["console"] = ctx.extras["console"]
    config = ctx.extras.get("config", {})
    return bind_default_table(
        None, None, ctx.platform.monotonic_ns, UserMemory(ctx.region.view), config=config.get("syscall"), **kwargs
    )


def _write_console(ctx: BootContext, table: SyscallTable, text: str) -> int:
    """经 write(1) 输出；有分配器时缓冲区从堆上分配，否则使用区域开头"""
    data = text.encode("utf-8")
    addr = ctx.allocator.allocate(len(data)) if ctx.allocator is not None else 0
    ctx.region.write(addr, data)
    ret = table.dispatch(Sysno.WRITE, 1, addr, len(data))
    if ctx.allocator is not None:
        ctx.allocator.release(addr)
    return ret


def helloworld(ctx: BootContext) -> int:
    """只依赖启动和系统调用垫片"""
    table = _console_table(ctx)
    message = ctx.extras.get("message", HELLO)
    ret = _write_console(ctx, table, message)
    return 0 if ret == len(message.encode("utf-8")) else 1


def netserver(ctx: BootContext) -> int:
    """回环上的回显服务：客户端发送请求，服务端回复大写后的内容

    有调度器时客户端和服务端各占一个线程，共享计数用互斥锁保护；
    否则在同一个上下文里交替轮询。
    """
    if ctx.allocator is None:
        raise BootError(BootError.BAD_CONFIG, "netserver 需要内存分配器")
    config = ctx.extras.get("config", {})
    requests = ctx.extras.get("requests", 16)
    client, server = loopback_pair(config.get("netdev"), ("ns-client", "ns-server"))
    for dev in (client, server):
        dev.configure(1, 1)
        dev.queue_configure(Direction.TX, 0, alloc=ctx.allocator)
        dev.queue_configure(Direction.RX, 0, alloc=ctx.allocator)
        dev.start()
    pool = NetBufPool(ctx.allocator, 32, 256)
    lock = make_mutex(config.get("sched"), ctx.scheduler)
    state = {"sent": 0, "served": 0}
    replies: List[bytes] = []
    client_rx: List[NetBuf] = []
    server_rx: List[NetBuf] = []

    def client_step() -> bool:
        if state["sent"] < requests:
            bufs = pool.get_many(requests - state["sent"])
            for i, buf in enumerate(bufs):
                buf.set_payload(f"hello {state['sent'] + i}".encode())
            sent = client.tx_burst(0, bufs).count
            for buf in bufs[sent:]:
                netbuf_free(buf)
            state["sent"] += sent
        client.rx_burst(0, client_rx)
        for buf in client_rx:
            replies.append(buf.tobytes())
            netbuf_free(buf)
        return len(replies) >= requests

    def server_step() -> bool:
        server.rx_burst(0, server_rx)
        out = []
        for buf in server_rx:
            buf.set_payload(buf.tobytes().upper())
            out.append(buf)
            with lock:
                state["served"] += 1
        while out:
            sent = server.tx_burst(0, out).count
            del out[:sent]
        return state["served"] >= requests

    if ctx.scheduler is not None:
        sched = ctx.scheduler

        def loop(step: Callable[[], bool]) -> None:
            while not step():
                sched.thread_yield()

        sched.thread_create(loop, server_step)
        sched.thread_create(loop, client_step)
        # main 自身也是线程：让出直到两个线程都完成
        while len(replies) < requests or state["served"] < requests:
            sched.thread_yield()
    else:
        done_client = done_server = False
        while not (done_client and done_server):
            done_client = client_step()
            done_server = server_step()

    ctx.extras["replies"] = replies
    pool.destroy()
    client.close()
    server.close()
    _write_console(ctx, _console_table(ctx), f"netserver: served {state['served']} requests\n")
    return 0


def kvstore(ctx: BootContext) -> int:
    """专用化的键值服务：突发收发、轮询、预分配缓冲区池"""
    from src.bench.kv import make_requests, run_kv

    if ctx.allocator is None:
        raise BootError(BootError.BAD_CONFIG, "kvstore 需要内存分配器")
    config = ctx.extras.get("config", {})
    stream = make_requests(ctx.extras.get("requests", 1000), ctx.extras.get("seed", 0))
    outcome = run_kv("specialized", stream, config=config.get("netdev"), alloc=ctx.allocator)
    ctx.extras["kv"] = outcome
    _write_console(ctx, _console_table(ctx), f"kvstore: served {outcome.served} requests ({outcome.ops_per_sec:.0f} ops/s)\n")
    return 0


APPS: Dict[str, Callable[[BootContext], int]] = {
    "app-helloworld": helloworld,
    "app-netserver": netserver,
    "app-kvstore": kvstore,
}
