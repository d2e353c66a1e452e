"""键值服务单元测试"""
import pytest

from src.bench.kv import (
    KvMessage,
    KvOp,
    KvStore,
    is_valid,
    kv_compare,
    kv_demo,
    make_requests,
    run_kv,
    serve_kv,
)
from src.errors import BenchError

SMALL = {"queue_capacity": 32, "max_burst": 8, "window": 8}


def test_message_wire_format():
    """测试报文布局使用网络字节序"""
    assert KvMessage(KvOp.SET, b"k", b"vv").encode() == b"\x01\x01k\x00\x02vv"
    assert KvMessage(KvOp.GET, b"key").encode() == b"\x00\x03key\x00\x00"
    msg = KvMessage.decode(b"\x01\x01k\x00\x02vv")
    assert msg == KvMessage(KvOp.SET, b"k", b"vv")


@pytest.mark.parametrize(
    "data",
    [
        b"\x00",
        b"\x07\x01k\x00\x00",
        b"\x00\x41" + b"k" * 65 + b"\x00\x00",
        b"\x00\x05key\x00",
        b"\x01\x01k\x00\x03vv",
        b"\x01\x01k\x00\x01vv",
    ],
)
def test_malformed_messages(data):
    """测试长度不符、操作码未知和超长"""
    with pytest.raises(BenchError) as exc:
        KvMessage.decode(data)
    assert exc.value.code == BenchError.MALFORMED
    assert not is_valid(data)


def test_encode_rejects_oversize():
    """测试编码超长的键或值"""
    with pytest.raises(BenchError):
        KvMessage(KvOp.SET, b"k" * 65).encode()
    with pytest.raises(BenchError):
        KvMessage(KvOp.SET, b"k", b"v" * 1025).encode()


def test_store_semantics():
    """测试 GET 未命中返回空值，SET 后 GET 返回新值"""
    store = KvStore()
    assert KvMessage.decode(store.apply(KvMessage(KvOp.GET, b"a"))).value == b""
    ack = KvMessage.decode(store.apply(KvMessage(KvOp.SET, b"a", b"1")))
    assert ack == KvMessage(KvOp.SET, b"a")
    assert KvMessage.decode(store.apply(KvMessage(KvOp.GET, b"a"))).value == b"1"


def test_request_stream_is_seeded():
    """测试相同种子得到相同请求流，畸形比例生效"""
    assert make_requests(100, seed=3) == make_requests(100, seed=3)
    assert make_requests(100, seed=3) != make_requests(100, seed=4)
    assert all(is_valid(r) for r in make_requests(200))
    stream = make_requests(400, malformed_ratio=0.2)
    bad = sum(not is_valid(r) for r in stream)
    assert 0 < bad < 200


async def test_modes_produce_identical_responses():
    """测试两种模式对同一请求流的响应逐字节相同"""
    # 以合法请求结尾：收到最后一个响应时服务端已处理完全部畸形报文
    stream = make_requests(300, seed=1, malformed_ratio=0.1) + [KvMessage(KvOp.GET, b"key0").encode()]
    valid = sum(is_valid(r) for r in stream)
    layered = await serve_kv("layered", stream, config=SMALL)
    specialized = await serve_kv("specialized", stream, config=SMALL)
    assert len(layered.responses) == valid
    assert layered.responses == specialized.responses
    assert layered.digest == specialized.digest
    assert layered.failures == specialized.failures == len(stream) - valid
    assert layered.served == specialized.served == valid
    assert layered.log_bytes > 0
    assert specialized.log_bytes == 0


async def test_responses_follow_store_semantics():
    """测试响应与顺序执行的键值表一致"""
    stream = make_requests(120, seed=2, keyspace=8)
    outcome = await serve_kv("specialized", stream, config=SMALL)
    store = KvStore()
    expected = [store.apply(KvMessage.decode(r)) for r in stream]
    assert outcome.responses == expected


def test_run_kv_and_unknown_mode():
    """测试同步入口和未知模式"""
    outcome = run_kv("specialized", make_requests(20), config=SMALL)
    assert outcome.served == 20
    assert outcome.ops_per_sec > 0
    with pytest.raises(BenchError) as exc:
        run_kv("fancy", [])
    assert exc.value.code == BenchError.BAD_PARAMS


def test_kv_compare():
    """测试对比两种模式：先校验一致再计时"""
    results = kv_compare(100, malformed_ratio=0.05, config=SMALL)
    assert [r.params["mode"] for r in results] == ["layered", "specialized"]
    assert results[0].extra["digest"] == results[1].extra["digest"]
    assert results[0].extra["served"] == results[1].extra["served"]


def test_kv_warmup_runs_are_discarded():
    """测试预热运行不计入样本"""
    result = kv_demo("specialized", 50, reps=2, warmup=1, config=SMALL)
    assert len(result.samples) == 2
    layered, specialized = kv_compare(50, reps=2, warmup=1, config=SMALL)
    assert len(layered.samples) == len(specialized.samples) == 2
