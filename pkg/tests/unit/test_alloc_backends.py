"""分配器后端单元测试"""
import bisect
import random

import pytest

from src.alloc.base import MIN_ALIGN
from src.bench.oracle import IntervalOracle
from src.errors import AllocError

HEAP = 1 << 20


def test_region_first_block(make_handle):
    """测试区域分配器的头部与剩余空间"""
    h = make_handle("region")
    assert h.available_bytes() == HEAP - 32
    block = h.allocate(1)
    assert block == 32
    assert h.usable_size(block) == MIN_ALIGN
    assert h.watermark() == block + MIN_ALIGN


def test_region_release_does_not_reclaim(make_handle):
    """测试区域分配器释放不回收空间"""
    h = make_handle("region")
    a = h.allocate(100)
    before = h.available_bytes()
    h.release(a)
    assert h.available_bytes() == before
    b = h.allocate(100)
    assert b > a


def test_region_last_block_grows_in_place(make_handle):
    """测试区域分配器最后一个块原地增长"""
    h = make_handle("region")
    a = h.allocate(64)
    h.buffer(a, 4)[:] = b"abcd"
    grown = h.reallocate(a, 1024)
    assert grown == a
    assert h.usable_size(a) == 1024
    assert bytes(h.buffer(a, 4)) == b"abcd"


def test_buddy_orders(make_handle):
    """测试伙伴分配器的阶数与块大小"""
    h = make_handle("buddy")
    assert h.ops.order_count == 16
    assert h.ops.free_blocks() == [(0, HEAP)]
    block = h.allocate(100)
    assert h.usable_size(block) == 128
    assert block % 128 == 0


def test_buddy_split_and_merge(make_handle):
    """测试伙伴块拆分后全部释放能合并回整块"""
    h = make_handle("buddy")
    block = h.allocate(100)
    free = h.ops.free_blocks()
    assert (128, 128) in free
    assert (HEAP // 2, HEAP // 2) in free
    assert sum(size for _, size in free) == HEAP - 128
    h.release(block)
    assert h.ops.free_blocks() == [(0, HEAP)]


def test_buddy_too_small(make_handle):
    """测试伙伴分配器小于最小块时报错"""
    with pytest.raises(AllocError) as exc:
        make_handle("buddy", length=16)
    assert exc.value.code == AllocError.REGION_TOO_SMALL


def test_tlsf_mapping_example(make_handle):
    """测试 TLSF 类映射示例"""
    h = make_handle("tlsf")
    assert h.ops.mapping_insert(460) == (8, 12)


def _classes(t):
    """按下界升序枚举 fl < 21 的全部类"""
    classes = []
    for fl in range(21):
        count = (1 << fl) if fl < t.sl_log else t.sl_subdivisions
        classes.extend((fl, sl) for sl in range(count))
    return classes, [t.class_lower_bound(fl, sl) for fl, sl in classes]


def test_tlsf_mapping_matches_enumeration(make_handle):
    """测试类映射与枚举全部类边界的结果一致"""
    t = make_handle("tlsf").ops
    classes, bounds = _classes(t)
    assert bounds == sorted(set(bounds))
    mapping = t.mapping_insert
    for size in range(1, (1 << 20) + 1):
        assert mapping(size) == classes[bisect.bisect_right(bounds, size) - 1]


def test_tlsf_mapping_search_rounds_up(make_handle):
    """测试查找类的下界不小于请求，且前一个类的下界小于请求"""
    t = make_handle("tlsf").ops
    classes, bounds = _classes(t)
    for size in range(16, 70000, 16):
        index = classes.index(t.mapping_search(size))
        assert bounds[index] >= size
        assert bounds[index - 1] < size


def test_tlsf_good_fit_selection(make_handle):
    """测试每次分配选中的类是查找类之后第一个非空类"""
    h = make_handle("tlsf")
    t = h.ops
    rng = random.Random(11)
    live = []
    for _ in range(2000):
        if live and rng.random() < 0.5:
            h.release(live.pop(rng.randrange(len(live))))
            continue
        size = rng.randint(1, 4096)
        request = max(size, 16) + (-max(size, 16)) % 16
        start = t.mapping_search(request)
        expected = next(c for c in t.nonempty_classes() if c >= start)
        live.append(h.allocate(size))
        assert t.last_class == expected
        assert t.last_fl_lookups <= 1
        assert t.last_sl_lookups <= 2


def test_tlsf_bitmaps_stay_consistent(make_handle):
    """测试每一步之后位图与空闲链表一致"""
    h = make_handle("tlsf")
    rng = random.Random(3)
    live = []
    for _ in range(1000):
        r = rng.random()
        if live and r < 0.4:
            h.release(live.pop(rng.randrange(len(live))))
        elif live and r < 0.5:
            i = rng.randrange(len(live))
            live[i] = h.reallocate(live[i], rng.randint(1, 4096))
        else:
            live.append(h.allocate(rng.randint(1, 4096)))
        assert h.ops.check_bitmaps()
    for block in live:
        h.release(block)
    assert h.ops.physical_blocks() == [(0, HEAP - 16, True)]


def test_tlsf_subdivisions_must_be_power_of_two(make_handle):
    """测试二级细分数不是2的幂时报错"""
    with pytest.raises(AllocError) as exc:
        make_handle("tlsf", config={"tlsf": {"sl_subdivisions": 12}})
    assert exc.value.code == AllocError.INVALID_SIZE


def test_tinyfree_coalesces(make_handle):
    """测试空闲链表释放后与相邻块合并"""
    h = make_handle("tinyfree")
    blocks = [h.allocate(200) for _ in range(5)]
    for block in blocks[::2] + blocks[1::2]:
        h.release(block)
    assert h.ops.free_blocks() == [(0, HEAP - 16)]
    assert h.ops.descriptors_in_use() == 1


def test_tinyfree_descriptor_exhaustion(make_handle):
    """测试描述符耗尽后不再拆分，整块交付"""
    h = make_handle("tinyfree", config={"tinyfree": {"max_blocks": 2}})
    first = h.allocate(64)
    assert h.usable_size(first) == 64
    assert h.ops.descriptors_in_use() == 2
    second = h.allocate(64)
    assert h.usable_size(second) == HEAP - 16 - 64 - 16
    assert h.available_bytes() == 0
    with pytest.raises(AllocError) as exc:
        h.allocate(16)
    assert exc.value.code == AllocError.OUT_OF_MEMORY


def test_too_small_heap(make_handle, backend):
    """测试所有后端在过小的堆上报错"""
    with pytest.raises(AllocError) as exc:
        make_handle(backend, length=16)
    assert exc.value.code == AllocError.REGION_TOO_SMALL


def test_aligned_allocation(make_handle, backend):
    """测试对齐分配"""
    h = make_handle(backend)
    h.allocate(24)
    block = h.allocate_aligned(4096, 100)
    assert block % 4096 == 0
    assert h.usable_size(block) >= 100
    again = h.allocate_aligned(64, 10)
    assert again % 64 == 0


def test_invalid_alignment(make_handle, backend):
    """测试非法对齐"""
    h = make_handle(backend)
    for align in (48, 8, 0):
        with pytest.raises(AllocError) as exc:
            h.allocate_aligned(align, 100)
        assert exc.value.code == AllocError.INVALID_ALIGNMENT


def test_invalid_size(make_handle, backend):
    """测试请求大小为0"""
    h = make_handle(backend)
    with pytest.raises(AllocError) as exc:
        h.allocate(0)
    assert exc.value.code == AllocError.INVALID_SIZE


def test_out_of_memory(make_handle, backend):
    """测试超出堆大小的请求"""
    h = make_handle(backend)
    with pytest.raises(AllocError) as exc:
        h.allocate(2 * HEAP)
    assert exc.value.code == AllocError.OUT_OF_MEMORY
    # 失败不影响后续请求
    assert h.usable_size(h.allocate(64)) >= 64


def test_double_release_detected(make_handle, backend):
    """测试调试模式下检测重复释放"""
    h = make_handle(backend, debug=True)
    a = h.allocate(100)
    h.allocate(100)
    h.release(a)
    with pytest.raises(AllocError) as exc:
        h.release(a)
    assert exc.value.code == AllocError.DOUBLE_RELEASE


def test_foreign_block_detected(make_handle, backend):
    """测试调试模式下检测不属于分配器的块"""
    h = make_handle(backend, debug=True)
    h.allocate(100)
    for block in (12345, 4 * HEAP):
        with pytest.raises(AllocError) as exc:
            h.release(block)
        assert exc.value.code == AllocError.FOREIGN_BLOCK


def test_release_none_is_noop(make_handle, backend):
    """测试释放 None 为空操作"""
    h = make_handle(backend)
    h.release(None)
    assert h.stats.free_count == 0


def test_reallocate_preserves_content(make_handle, backend):
    """测试调整大小保留原有内容"""
    h = make_handle(backend)
    a = h.allocate(64)
    h.allocate(32)
    h.buffer(a, 64)[:] = bytes(range(64))
    b = h.reallocate(a, 5000)
    assert h.usable_size(b) >= 5000
    assert bytes(h.buffer(b, 64)) == bytes(range(64))
    assert h.reallocate(b, 10) == b
    assert h.reallocate(b, 0) is None
    c = h.reallocate(None, 48)
    assert h.usable_size(c) >= 48


def test_allocate_zeroed(make_handle, backend):
    """测试分配并清零"""
    h = make_handle(backend)
    a = h.allocate(256)
    h.buffer(a)[:] = b"\xff" * h.usable_size(a)
    h.release(a)
    b = h.allocate_zeroed(256)
    assert bytes(h.buffer(b, 256)) == bytes(256)


def test_random_trace_against_oracle(make_handle, backend):
    """测试随机操作序列中存活块两两不相交且内容不被破坏"""
    h = make_handle(backend, debug=True)
    oracle = IntervalOracle(h.heap_base, h.heap_base + h.heap_len, MIN_ALIGN)
    rng = random.Random(2024)
    live = {}
    for step in range(3000):
        r = rng.random()
        if live and r < 0.4:
            block = rng.choice(list(live))
            assert bytes(h.buffer(block, 4)) == live.pop(block)
            oracle.remove(block)
            h.release(block)
            continue
        try:
            if live and r < 0.5:
                old = rng.choice(list(live))
                block = h.reallocate(old, rng.randint(1, 4096))
                oracle.remove(old)
                assert bytes(h.buffer(block, 4)) == live.pop(old)
            elif r < 0.6:
                block = h.allocate_aligned(1 << rng.randint(4, 10), rng.randint(1, 2048))
            else:
                block = h.allocate(rng.randint(1, 2048))
        except AllocError as e:
            assert e.code == AllocError.OUT_OF_MEMORY
            continue
        oracle.add(block, h.usable_size(block))
        stamp = step.to_bytes(4, "little")
        h.buffer(block, 4)[:] = stamp
        live[block] = stamp
    assert len(oracle) == len(live)


def test_buddy_fully_coalesces_when_empty(make_handle):
    """测试每次存活块清空时伙伴分配器都合并回一整块"""
    h = make_handle("buddy")
    rng = random.Random(5)
    live = []
    checkpoints = 0
    for _ in range(10_000):
        if live and (len(live) >= 64 or rng.random() < 0.45):
            h.release(live.pop(rng.randrange(len(live))))
            if not live:
                assert h.ops.free_blocks() == [(0, HEAP)]
                checkpoints += 1
        else:
            live.append(h.allocate(rng.randint(1, 8192)))
    assert checkpoints > 0
