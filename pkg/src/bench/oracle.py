"""区间集合校验器：已分配块两两不相交且都在堆范围内"""
import bisect
from typing import Dict, List, Optional, Tuple

from src.errors import BenchError


class IntervalOracle:
    """记录存活块 [start, start+size)，每次变更都检查不变式"""

    def __init__(self, low: int = 0, high: Optional[int] = None, align: int = 1):
        self.low = low
        self.high = high
        self.align = align
        self.starts: List[int] = []
        self.sizes: Dict[int, int] = {}

    def __len__(self) -> int:
        return len(self.starts)

    def __contains__(self, start: int) -> bool:
        return start in self.sizes

    @property
    def live_bytes(self) -> int:
        return sum(self.sizes.values())

    def add(self, start: int, size: int, align: Optional[int] = None) -> None:
        align = align or self.align
        if start % align:
            raise BenchError(BenchError.MISMATCH, f"块 {start:#x} 未按 {align} 对齐")
        end = start + max(size, 1)
        if start < self.low or (self.high is not None and end > self.high):
            raise BenchError(BenchError.MISMATCH, f"块 [{start:#x}, {end:#x}) 超出堆范围")
        i = bisect.bisect_left(self.starts, start)
        if i < len(self.starts) and self.starts[i] < end:
            raise BenchError(BenchError.MISMATCH, f"块 [{start:#x}, {end:#x}) 与 {self.starts[i]:#x} 重叠")
        if i > 0:
            prev = self.starts[i - 1]
            if prev + max(self.sizes[prev], 1) > start:
                raise BenchError(BenchError.MISMATCH, f"块 [{start:#x}, {end:#x}) 与 {prev:#x} 重叠")
        self.starts.insert(i, start)
        self.sizes[start] = size

    def remove(self, start: int) -> int:
        if start not in self.sizes:
            raise BenchError(BenchError.MISMATCH, f"释放了未记录的块 {start:#x}")
        i = bisect.bisect_left(self.starts, start)
        del self.starts[i]
        return self.sizes.pop(start)

    def resize(self, old: int, new: int, size: int) -> None:
        self.remove(old)
        self.add(new, size)

    def intervals(self) -> List[Tuple[int, int]]:
        return [(s, s + self.sizes[s]) for s in self.starts]
