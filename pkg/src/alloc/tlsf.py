"""TLSF 分配器（两级分离适配）

空闲块按一级（2的幂区间）和二级（区间线性细分）归类，
通过位图在有限次查找内定位“好适配”类，不遍历空闲链表。

块布局：16字节边界标签 [前一物理块偏移(i64) 大小(u32) 魔数(u32)]，
其后是 大小 字节的载荷；下一物理块紧随载荷之后。
"""
import struct
from typing import Dict, List, Optional, Tuple

from src.alloc.base import (
    FREE_MAGIC,
    MIN_ALIGN,
    USED_MAGIC,
    AllocatorBackend,
    BackendKind,
    align_down,
    align_up,
    is_power_of_two,
)
from src.errors import AllocError

HDR = struct.Struct("<qII")
HDR_SIZE = HDR.size
MIN_BLOCK = MIN_ALIGN

DEFAULT_SL_SUBDIVISIONS = 16
DEFAULT_FL_INDEX_MAX = 30


def _ffs(value: int) -> int:
    """最低置位比特的下标"""
    return (value & -value).bit_length() - 1


class TlsfAllocator(AllocatorBackend):
    """TLSF 后端"""

    kind = BackendKind.TLSF

    def init(self) -> None:
        sl_count = self.config.get("sl_subdivisions", DEFAULT_SL_SUBDIVISIONS)
        if not is_power_of_two(sl_count):
            raise AllocError(AllocError.INVALID_SIZE, f"二级细分数必须是2的幂: {sl_count}")
        self.sl_subdivisions = sl_count
        self.sl_log = sl_count.bit_length() - 1
        self.fl_index_max = self.config.get("fl_index_max", DEFAULT_FL_INDEX_MAX)
        self.max_block = min((1 << (self.fl_index_max + 1)) - MIN_ALIGN, 0xFFFFFFF0)

        self.fl_bitmap = 0
        self.sl_bitmaps: List[int] = [0] * (self.fl_index_max + 1)
        self.segregated_lists: List[List[Dict[int, None]]] = [
            [{} for _ in range(sl_count)] for _ in range(self.fl_index_max + 1)
        ]
        # 最近一次查找的插桩计数
        self.last_fl_lookups = 0
        self.last_sl_lookups = 0
        self.last_class: Optional[Tuple[int, int]] = None

        self.start = align_up(self.base, MIN_ALIGN)
        end = align_down(self.end, MIN_ALIGN)
        if end - self.start < HDR_SIZE + MIN_BLOCK:
            raise AllocError(
                AllocError.REGION_TOO_SMALL,
                f"堆过小: {self.length} < {HDR_SIZE + MIN_BLOCK}",
            )

        # 超过最大类的堆切成多个空闲块
        off, prev = self.start, -1
        while end - off >= HDR_SIZE + MIN_BLOCK:
            size = min(end - off - HDR_SIZE, self.max_block)
            HDR.pack_into(self.view, off, prev, size, FREE_MAGIC)
            self._insert(off, size)
            prev = off
            off += HDR_SIZE + size
        self.limit = off

    # ---- 类映射 ----

    def mapping_insert(self, size: int) -> Tuple[int, int]:
        """空闲块大小所属的类"""
        fl = size.bit_length() - 1
        if fl < self.sl_log:
            return fl, size - (1 << fl)
        sl = (size >> (fl - self.sl_log)) ^ self.sl_subdivisions
        return fl, sl

    def mapping_search(self, size: int) -> Tuple[int, int]:
        """请求向上取整到类边界后的起始类"""
        fl = size.bit_length() - 1
        if fl >= self.sl_log:
            size += (1 << (fl - self.sl_log)) - 1
        return self.mapping_insert(size)

    def class_lower_bound(self, fl: int, sl: int) -> int:
        if fl < self.sl_log:
            return (1 << fl) + sl
        return (1 << fl) + sl * (1 << (fl - self.sl_log))

    # ---- 空闲链表 ----

    def _insert(self, off: int, size: int) -> None:
        fl, sl = self.mapping_insert(size)
        self.segregated_lists[fl][sl][off] = None
        self.sl_bitmaps[fl] |= 1 << sl
        self.fl_bitmap |= 1 << fl

    def _remove(self, off: int, size: int) -> None:
        fl, sl = self.mapping_insert(size)
        bucket = self.segregated_lists[fl][sl]
        del bucket[off]
        if not bucket:
            self.sl_bitmaps[fl] &= ~(1 << sl)
            if not self.sl_bitmaps[fl]:
                self.fl_bitmap &= ~(1 << fl)

    def _find_suitable(self, fl: int, sl: int) -> Optional[Tuple[int, int]]:
        fl_lookups = 0
        sl_map = self.sl_bitmaps[fl] & (~0 << sl)
        sl_lookups = 1
        if not sl_map:
            fl_map = self.fl_bitmap & (~0 << (fl + 1))
            fl_lookups = 1
            if not fl_map:
                self.last_fl_lookups, self.last_sl_lookups = fl_lookups, sl_lookups
                return None
            fl = _ffs(fl_map)
            sl_map = self.sl_bitmaps[fl]
            sl_lookups += 1
        self.last_fl_lookups, self.last_sl_lookups = fl_lookups, sl_lookups
        return fl, _ffs(sl_map)

    # ---- 物理块 ----

    def _next_of(self, off: int, size: int) -> int:
        return off + HDR_SIZE + size

    def _set_prev(self, off: int, prev: int) -> None:
        if off < self.limit:
            _, size, magic = HDR.unpack_from(self.view, off)
            HDR.pack_into(self.view, off, prev, size, magic)

    def _trim_tail(self, off: int, prev: int, size: int, keep: int) -> int:
        """把超出 keep 的尾部切成空闲块，并与后继空闲块合并"""
        rest = size - keep - HDR_SIZE
        if rest < MIN_BLOCK:
            return size
        tail = off + HDR_SIZE + keep
        nxt = self._next_of(off, size)
        if nxt < self.limit:
            _, nsize, nmagic = HDR.unpack_from(self.view, nxt)
            if nmagic == FREE_MAGIC and rest + HDR_SIZE + nsize <= self.max_block:
                self._remove(nxt, nsize)
                rest += HDR_SIZE + nsize
        HDR.pack_into(self.view, tail, off, rest, FREE_MAGIC)
        self._insert(tail, rest)
        self._set_prev(self._next_of(tail, rest), tail)
        return keep

    # ---- 操作 ----

    def allocate(self, size: int) -> int:
        request = align_up(max(size, MIN_BLOCK), MIN_ALIGN)
        if request > self.max_block:
            raise AllocError(AllocError.OUT_OF_MEMORY, f"请求过大: {size}")
        fl, sl = self.mapping_search(request)
        found = self._find_suitable(fl, sl) if fl <= self.fl_index_max else None
        if found is None:
            raise AllocError(AllocError.OUT_OF_MEMORY, f"TLSF 内存耗尽: 请求 {size}")
        fl, sl = found
        self.last_class = found
        bucket = self.segregated_lists[fl][sl]
        off, _ = bucket.popitem()
        if not bucket:
            self.sl_bitmaps[fl] &= ~(1 << sl)
            if not self.sl_bitmaps[fl]:
                self.fl_bitmap &= ~(1 << fl)

        prev, bsize, _ = HDR.unpack_from(self.view, off)
        rest = bsize - request - HDR_SIZE
        if rest >= MIN_BLOCK:
            # 空闲块的物理邻居都是已用块，余块无需合并
            tail = off + HDR_SIZE + request
            HDR.pack_into(self.view, tail, off, rest, FREE_MAGIC)
            self._insert(tail, rest)
            self._set_prev(tail + HDR_SIZE + rest, tail)
            bsize = request
        HDR.pack_into(self.view, off, prev, bsize, USED_MAGIC)
        return off + HDR_SIZE

    def allocate_aligned(self, align: int, size: int) -> int:
        if align <= MIN_ALIGN:
            return self.allocate(size)
        request = align_up(max(size, MIN_BLOCK), MIN_ALIGN)
        ptr = self.allocate(request + align + HDR_SIZE + MIN_BLOCK)
        if ptr % align == 0:
            off = ptr - HDR_SIZE
            prev, bsize, _ = HDR.unpack_from(self.view, off)
            bsize = self._trim_tail(off, prev, bsize, request)
            HDR.pack_into(self.view, off, prev, bsize, USED_MAGIC)
            return ptr

        off = ptr - HDR_SIZE
        prev, bsize, _ = HDR.unpack_from(self.view, off)
        aligned = align_up(ptr + HDR_SIZE + MIN_BLOCK, align)
        gap = aligned - ptr
        # 前导间隙成为空闲块；其前驱必为已用块
        HDR.pack_into(self.view, off, prev, gap - HDR_SIZE, FREE_MAGIC)
        self._insert(off, gap - HDR_SIZE)
        new_off = aligned - HDR_SIZE
        new_size = bsize - gap
        self._set_prev(self._next_of(new_off, new_size), new_off)
        new_size = self._trim_tail(new_off, off, new_size, request)
        HDR.pack_into(self.view, new_off, off, new_size, USED_MAGIC)
        return aligned

    def _validate(self, ptr: int) -> Tuple[int, int, int]:
        off = ptr - HDR_SIZE
        if off < self.start or ptr >= self.limit or (off - self.start) % MIN_ALIGN:
            raise self._foreign(ptr)
        prev, size, magic = HDR.unpack_from(self.view, off)
        if magic == FREE_MAGIC:
            raise self._double(ptr)
        if magic != USED_MAGIC:
            raise self._foreign(ptr)
        return off, prev, size

    def release(self, ptr: int) -> int:
        if self.debug:
            off, prev, size = self._validate(ptr)
        else:
            off = ptr - HDR_SIZE
            prev, size, _ = HDR.unpack_from(self.view, off)
        freed = size
        view = self.view

        nxt = off + HDR_SIZE + size
        if nxt < self.limit:
            _, nsize, nmagic = HDR.unpack_from(view, nxt)
            if nmagic == FREE_MAGIC and size + HDR_SIZE + nsize <= self.max_block:
                self._remove(nxt, nsize)
                size += HDR_SIZE + nsize
        if prev >= 0:
            pprev, psize, pmagic = HDR.unpack_from(view, prev)
            if pmagic == FREE_MAGIC and psize + HDR_SIZE + size <= self.max_block:
                self._remove(prev, psize)
                # 被吸收块保留空闲魔数，调试模式下可识别重复释放
                HDR.pack_into(view, off, prev, size, FREE_MAGIC)
                off, size, prev = prev, psize + HDR_SIZE + size, pprev
        HDR.pack_into(view, off, prev, size, FREE_MAGIC)
        self._set_prev(off + HDR_SIZE + size, off)
        self._insert(off, size)
        return freed

    def try_resize(self, ptr: int, new_size: int) -> bool:
        off = ptr - HDR_SIZE
        prev, size, _ = HDR.unpack_from(self.view, off)
        request = align_up(max(new_size, MIN_BLOCK), MIN_ALIGN)
        if request <= size:
            return True
        nxt = off + HDR_SIZE + size
        if nxt >= self.limit:
            return False
        _, nsize, nmagic = HDR.unpack_from(self.view, nxt)
        total = size + HDR_SIZE + nsize
        if nmagic != FREE_MAGIC or total < request:
            return False
        self._remove(nxt, nsize)
        self._set_prev(self._next_of(off, total), off)
        total = self._trim_tail(off, prev, total, request)
        HDR.pack_into(self.view, off, prev, total, USED_MAGIC)
        return True

    def usable_size(self, ptr: int) -> int:
        if self.debug:
            return self._validate(ptr)[2]
        return HDR.unpack_from(self.view, ptr - HDR_SIZE)[1]

    def available_bytes(self) -> int:
        total = 0
        for fl, row in enumerate(self.segregated_lists):
            if not (self.fl_bitmap >> fl) & 1:
                continue
            for bucket in row:
                for off in bucket:
                    total += HDR.unpack_from(self.view, off)[1]
        return total

    def physical_blocks(self) -> List[Tuple[int, int, bool]]:
        """按地址列出所有物理块 (偏移, 大小, 是否空闲)"""
        blocks = []
        off = self.start
        while off < self.limit:
            _, size, magic = HDR.unpack_from(self.view, off)
            blocks.append((off, size, magic == FREE_MAGIC))
            off += HDR_SIZE + size
        return blocks

    def watermark(self) -> int:
        mark = self.start
        for off, size, free in self.physical_blocks():
            if not free:
                mark = off + HDR_SIZE + size
        return mark

    def nonempty_classes(self) -> List[Tuple[int, int]]:
        """非空的 (fl, sl) 类，升序"""
        return [
            (fl, sl)
            for fl, row in enumerate(self.segregated_lists)
            for sl, bucket in enumerate(row)
            if bucket
        ]

    def check_bitmaps(self) -> bool:
        """位图与链表一致：置位当且仅当链表非空"""
        for fl, row in enumerate(self.segregated_lists):
            fl_set = bool((self.fl_bitmap >> fl) & 1)
            if fl_set != any(row):
                return False
            for sl, bucket in enumerate(row):
                if bool((self.sl_bitmaps[fl] >> sl) & 1) != bool(bucket):
                    return False
        return True
