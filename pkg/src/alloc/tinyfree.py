"""小型空闲链表分配器

单一按地址排序的空闲链表，首次适配，余量足够时拆分，
释放时与地址相邻的空闲块合并。每个块（空闲或已用）占用一个
块描述符，描述符池耗尽后不再拆分，整块交付。
"""
import bisect
from typing import Dict, List, Tuple

from src.alloc.base import (
    FREE_MAGIC,
    MIN_ALIGN,
    TAG,
    TAG_SIZE,
    USED_MAGIC,
    AllocatorBackend,
    BackendKind,
    align_down,
    align_up,
    round_request,
)
from src.errors import AllocError

DEFAULT_MAX_BLOCKS = 4096
SPLIT_THRESHOLD = TAG_SIZE + MIN_ALIGN


class TinyFreeAllocator(AllocatorBackend):
    """首次适配空闲链表后端"""

    kind = BackendKind.TINYFREE

    def init(self) -> None:
        self.max_blocks = self.config.get("max_blocks", DEFAULT_MAX_BLOCKS)
        if self.max_blocks < 1:
            raise AllocError(AllocError.INVALID_SIZE, f"描述符数量必须大于0: {self.max_blocks}")
        self.start = align_up(self.base, MIN_ALIGN)
        self.limit = align_down(self.end, MIN_ALIGN)
        if self.limit - self.start < TAG_SIZE + MIN_ALIGN:
            raise AllocError(AllocError.REGION_TOO_SMALL, f"堆过小: {self.length}")
        self.descriptors: List[int] = list(range(self.max_blocks - 1, -1, -1))
        desc = self.descriptors.pop()
        size = self.limit - self.start - TAG_SIZE
        TAG.pack_into(self.view, self.start, FREE_MAGIC, desc, size)
        # 空闲块标签偏移（升序）与对应大小
        self.free_offsets: List[int] = [self.start]
        self.free_sizes: Dict[int, int] = {self.start: size}

    def _split(self, off: int, size: int, request: int, index: int) -> int:
        """从空闲块尾部切出余块插回空闲链表，返回保留大小"""
        rest = size - request - TAG_SIZE
        if size - request < SPLIT_THRESHOLD or not self.descriptors:
            return size
        tail = off + TAG_SIZE + request
        TAG.pack_into(self.view, tail, FREE_MAGIC, self.descriptors.pop(), rest)
        self.free_offsets.insert(index, tail)
        self.free_sizes[tail] = rest
        return request

    def allocate(self, size: int) -> int:
        request = round_request(size)
        sizes = self.free_sizes
        for index, off in enumerate(self.free_offsets):
            if sizes[off] >= request:
                break
        else:
            raise AllocError(AllocError.OUT_OF_MEMORY, f"空闲链表内存耗尽: 请求 {size}")
        del self.free_offsets[index]
        block_size = self._split(off, sizes.pop(off), request, index)
        desc = TAG.unpack_from(self.view, off)[1]
        TAG.pack_into(self.view, off, USED_MAGIC, desc, block_size)
        return off + TAG_SIZE

    def allocate_aligned(self, align: int, size: int) -> int:
        if align <= MIN_ALIGN:
            return self.allocate(size)
        request = round_request(size)
        sizes = self.free_sizes
        for index, off in enumerate(self.free_offsets):
            payload = off + TAG_SIZE
            aligned = align_up(payload, align)
            # 前导间隙须能容纳一个独立的空闲块
            if aligned != payload and aligned - payload < SPLIT_THRESHOLD:
                aligned = align_up(payload + SPLIT_THRESHOLD, align)
            gap = aligned - payload
            if payload + sizes[off] - aligned >= request and (gap == 0 or self.descriptors):
                break
        else:
            raise AllocError(AllocError.OUT_OF_MEMORY, f"无法满足对齐请求: {align}/{size}")

        block_size = sizes[off]
        if gap:
            # 间隙留作空闲块，原空闲块位置不变
            sizes[off] = gap - TAG_SIZE
            TAG.pack_into(self.view, off, FREE_MAGIC, TAG.unpack_from(self.view, off)[1], gap - TAG_SIZE)
            new_off = aligned - TAG_SIZE
            new_size = block_size - gap
            desc = self.descriptors.pop()
            index += 1
        else:
            del self.free_offsets[index]
            del sizes[off]
            new_off, new_size = off, block_size
            desc = TAG.unpack_from(self.view, off)[1]
        new_size = self._split(new_off, new_size, request, index)
        TAG.pack_into(self.view, new_off, USED_MAGIC, desc, new_size)
        return aligned

    def _tag(self, block: int) -> Tuple[int, int, int]:
        off = block - TAG_SIZE
        if off < self.start or block >= self.limit or (off - self.start) % MIN_ALIGN:
            raise self._foreign(block)
        magic, desc, size = TAG.unpack_from(self.view, off)
        if self.debug:
            if magic == FREE_MAGIC:
                raise self._double(block)
            if magic != USED_MAGIC:
                raise self._foreign(block)
        return off, desc, size

    def release(self, block: int) -> int:
        off, desc, size = self._tag(block)
        freed = size
        offsets, sizes = self.free_offsets, self.free_sizes
        index = bisect.bisect_left(offsets, off)

        nxt = off + TAG_SIZE + size
        if index < len(offsets) and offsets[index] == nxt:
            size += TAG_SIZE + sizes.pop(nxt)
            self.descriptors.append(TAG.unpack_from(self.view, nxt)[1])
            del offsets[index]
        if index > 0:
            prev = offsets[index - 1]
            if prev + TAG_SIZE + sizes[prev] == off:
                # 标签保留空闲魔数，调试模式下可识别重复释放
                TAG.pack_into(self.view, off, FREE_MAGIC, desc, size)
                self.descriptors.append(desc)
                sizes[prev] += TAG_SIZE + size
                TAG.pack_into(self.view, prev, FREE_MAGIC, TAG.unpack_from(self.view, prev)[1], sizes[prev])
                return freed
        TAG.pack_into(self.view, off, FREE_MAGIC, desc, size)
        offsets.insert(index, off)
        sizes[off] = size
        return freed

    def try_resize(self, block: int, new_size: int) -> bool:
        off, desc, size = self._tag(block)
        request = round_request(new_size)
        if request <= size:
            return True
        nxt = off + TAG_SIZE + size
        nsize = self.free_sizes.get(nxt)
        if nsize is None or size + TAG_SIZE + nsize < request:
            return False
        index = bisect.bisect_left(self.free_offsets, nxt)
        del self.free_offsets[index]
        del self.free_sizes[nxt]
        self.descriptors.append(TAG.unpack_from(self.view, nxt)[1])
        total = self._split(off, size + TAG_SIZE + nsize, request, index)
        TAG.pack_into(self.view, off, USED_MAGIC, desc, total)
        return True

    def usable_size(self, block: int) -> int:
        return self._tag(block)[2]

    def available_bytes(self) -> int:
        return sum(self.free_sizes.values())

    def free_blocks(self) -> List[Tuple[int, int]]:
        """空闲块 (标签偏移, 大小)，按地址排序"""
        return [(off, self.free_sizes[off]) for off in self.free_offsets]

    def watermark(self) -> int:
        mark = self.start
        off = self.start
        while off < self.limit:
            size = TAG.unpack_from(self.view, off)[2]
            if off not in self.free_sizes:
                mark = off + TAG_SIZE + size
            off += TAG_SIZE + size
        return mark

    def descriptors_in_use(self) -> int:
        return self.max_blocks - len(self.descriptors)
