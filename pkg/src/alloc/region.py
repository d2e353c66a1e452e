"""区域分配器（只增不减）

游标单调前移，释放只做记账，不回收空间。
适合启动期分配器：用完后在水位线处退役，剩余空间交给主分配器。
"""
from src.alloc.base import (
    FREE_MAGIC,
    MIN_ALIGN,
    REGION_MAGIC,
    TAG,
    TAG_SIZE,
    USED_MAGIC,
    AllocatorBackend,
    BackendKind,
    align_up,
)
from src.errors import AllocError


class RegionAllocator(AllocatorBackend):
    """区域分配器后端"""

    kind = BackendKind.REGION

    def init(self) -> None:
        self.start = align_up(self.base, MIN_ALIGN)
        if self.end - self.start < 2 * TAG_SIZE + MIN_ALIGN:
            raise AllocError(AllocError.REGION_TOO_SMALL, f"堆过小: {self.length}")
        TAG.pack_into(self.view, self.start, REGION_MAGIC, 0, self.length)
        self.cursor = self.start + TAG_SIZE
        self.last_block = -1

    def allocate(self, size: int) -> int:
        request = align_up(max(size, MIN_ALIGN), MIN_ALIGN)
        block = self.cursor + TAG_SIZE
        if block + request > self.end:
            raise AllocError(
                AllocError.OUT_OF_MEMORY,
                f"区域分配器内存耗尽: 请求 {size}, 剩余 {self.available_bytes()}",
            )
        TAG.pack_into(self.view, self.cursor, USED_MAGIC, 0, request)
        self.cursor = block + request
        self.last_block = block
        return block

    def allocate_aligned(self, align: int, size: int) -> int:
        if align <= MIN_ALIGN:
            return self.allocate(size)
        request = align_up(max(size, MIN_ALIGN), MIN_ALIGN)
        block = align_up(self.cursor + TAG_SIZE, align)
        if block + request > self.end:
            raise AllocError(AllocError.OUT_OF_MEMORY, f"区域分配器无法满足对齐请求: {align}/{size}")
        # 间隙空间放弃
        TAG.pack_into(self.view, block - TAG_SIZE, USED_MAGIC, 0, request)
        self.cursor = block + request
        self.last_block = block
        return block

    def _tag(self, block: int):
        if block < self.start + 2 * TAG_SIZE or block >= self.cursor or (block - self.start) % MIN_ALIGN:
            raise self._foreign(block)
        magic, _, size = TAG.unpack_from(self.view, block - TAG_SIZE)
        if self.debug:
            if magic == FREE_MAGIC:
                raise self._double(block)
            if magic != USED_MAGIC:
                raise self._foreign(block)
        return magic, size

    def release(self, block: int) -> int:
        _, size = self._tag(block)
        if self.debug:
            TAG.pack_into(self.view, block - TAG_SIZE, FREE_MAGIC, 0, size)
        return size

    def try_resize(self, block: int, new_size: int) -> bool:
        # 只有最后一个块可以原地增长
        if block != self.last_block:
            return False
        request = align_up(new_size, MIN_ALIGN)
        if block + request > self.end:
            return False
        TAG.pack_into(self.view, block - TAG_SIZE, USED_MAGIC, 0, request)
        self.cursor = block + request
        return True

    def usable_size(self, block: int) -> int:
        return self._tag(block)[1]

    def available_bytes(self) -> int:
        return max(0, self.end - self.cursor - TAG_SIZE)

    def watermark(self) -> int:
        return self.cursor
