"""伙伴分配器

2的幂大小的块，递归拆分，释放时立即合并伙伴块。
已分配块的阶数记录在每个最小块一字节的阶表中，
因此块内没有头部，块天然按自身大小对齐。
"""
from typing import Dict, List, Tuple

from src.alloc.base import (
    MIN_ALIGN,
    AllocatorBackend,
    BackendKind,
    align_up,
    is_power_of_two,
)
from src.errors import AllocError

DEFAULT_MIN_BLOCK = 32


class BuddyAllocator(AllocatorBackend):
    """伙伴分配器后端"""

    kind = BackendKind.BUDDY

    def init(self) -> None:
        self.min_block = self.config.get("min_block", DEFAULT_MIN_BLOCK)
        if not is_power_of_two(self.min_block) or self.min_block < MIN_ALIGN:
            raise AllocError(AllocError.INVALID_SIZE, f"最小块必须是不小于16的2的幂: {self.min_block}")
        self.shift = self.min_block.bit_length() - 1
        self.start = align_up(self.base, MIN_ALIGN)
        span = self.end - self.start
        units = span >> self.shift if span > 0 else 0
        if units < 1:
            raise AllocError(
                AllocError.REGION_TOO_SMALL,
                f"堆小于一个最小块: {self.length} < {self.min_block}",
            )
        self.span = units << self.shift
        self.order_count = units.bit_length()
        self.free_lists: List[Dict[int, None]] = [{} for _ in range(self.order_count)]
        # 每个最小块一字节：已分配块起点处存 阶数+1
        self.order_map = bytearray(units)

        # 用最大的自然对齐块铺满堆
        rel = 0
        while rel + self.min_block <= self.span:
            order = self.order_count - 1
            while order > 0 and ((rel & ((self.min_block << order) - 1)) or rel + (self.min_block << order) > self.span):
                order -= 1
            self.free_lists[order][self.start + rel] = None
            rel += self.min_block << order

    def _order_for(self, size: int) -> int:
        need = max(size, self.min_block)
        return ((need - 1) >> self.shift).bit_length()

    def block_size(self, order: int) -> int:
        return self.min_block << order

    def allocate(self, size: int) -> int:
        order = self._order_for(size)
        if order >= self.order_count:
            raise AllocError(AllocError.OUT_OF_MEMORY, f"请求过大: {size}")
        free_lists = self.free_lists
        k = order
        while k < self.order_count and not free_lists[k]:
            k += 1
        if k == self.order_count:
            raise AllocError(AllocError.OUT_OF_MEMORY, f"伙伴分配器内存耗尽: 请求 {size}")
        block, _ = free_lists[k].popitem()
        # 拆分：保留低半块，高半块挂到下一阶
        while k > order:
            k -= 1
            free_lists[k][block + (self.min_block << k)] = None
        self.order_map[(block - self.start) >> self.shift] = order + 1
        return block

    def allocate_aligned(self, align: int, size: int) -> int:
        if align <= MIN_ALIGN:
            return self.allocate(size)
        if self.start % align:
            raise AllocError(
                AllocError.OUT_OF_MEMORY,
                f"堆起点 {self.start:#x} 无法满足 {align} 字节对齐",
            )
        # 块按自身大小对齐
        return self.allocate(max(size, align))

    def _lookup_order(self, block: int) -> int:
        rel = block - self.start
        if rel < 0 or rel >= self.span or rel & (self.min_block - 1):
            raise self._foreign(block)
        value = self.order_map[rel >> self.shift]
        if value == 0:
            if self.debug and any(block in fl for fl in self.free_lists):
                raise self._double(block)
            raise self._foreign(block)
        return value - 1

    def release(self, block: int) -> int:
        order = self._lookup_order(block)
        self.order_map[(block - self.start) >> self.shift] = 0
        freed = self.min_block << order

        rel = block - self.start
        k = order
        free_lists = self.free_lists
        top = self.order_count - 1
        while k < top:
            size = self.min_block << k
            buddy = rel ^ size
            if buddy + size > self.span or (self.start + buddy) not in free_lists[k]:
                break
            del free_lists[k][self.start + buddy]
            rel = min(rel, buddy)
            k += 1
        free_lists[k][self.start + rel] = None
        return freed

    def usable_size(self, block: int) -> int:
        return self.min_block << self._lookup_order(block)

    def available_bytes(self) -> int:
        return sum(len(fl) * (self.min_block << k) for k, fl in enumerate(self.free_lists))

    def watermark(self) -> int:
        used = self.order_map.rstrip(b"\x00")
        if not used:
            return self.start
        idx = len(used) - 1
        return self.start + (idx << self.shift) + (self.min_block << (used[idx] - 1))

    def free_blocks(self) -> List[Tuple[int, int]]:
        """所有空闲块 (偏移, 大小)，按偏移排序"""
        return sorted(
            (off, self.min_block << k)
            for k, fl in enumerate(self.free_lists)
            for off in fl
        )
