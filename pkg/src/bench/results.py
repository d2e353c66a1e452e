"""基准测试结果与参数"""
import csv
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError

from src.errors import BenchError

logger = logging.getLogger(__name__)

CSV_COLUMNS = ("name", "params", "median_ns", "p10_ns", "p90_ns", "samples")


class BenchParams(BaseModel):
    """公共参数，来自 bench 配置段和命令行"""

    reps: int = Field(20, gt=0)
    warmup: int = Field(2, ge=0)
    heap_bytes: int = Field(256 * 1024 * 1024, gt=0)
    duration: float = Field(1.0, gt=0)
    seed: int = 0
    progress: bool = False

    @classmethod
    def from_config(cls, section: Optional[Dict[str, Any]] = None, **overrides: Any) -> "BenchParams":
        """合并配置段和覆盖项，None 值不覆盖；校验失败报 bad_params"""
        data = {k: v for k, v in (section or {}).items() if k in cls.model_fields}
        data.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return cls(**data)
        except ValidationError as e:
            raise BenchError(BenchError.BAD_PARAMS, f"基准参数无效: {e}")


def check_positive(name: str, value: Union[int, float]) -> None:
    if value is None or value <= 0:
        raise BenchError(BenchError.BAD_PARAMS, f"{name} 必须为正数: {value}")


@dataclass
class BenchResult:
    """一项测量：原始样本及其摘要

    样本单位由 params["unit"] 给出（ns 或 ops/s），摘要总是由样本精确计算。
    """

    name: str
    params: Dict[str, Any] = field(default_factory=dict)
    samples: List[float] = field(default_factory=list)
    extra: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not self.samples:
            raise BenchError(BenchError.BAD_PARAMS, f"{self.name} 没有样本")

    @property
    def unit(self) -> str:
        return self.params.get("unit", "ns")

    @property
    def summary(self) -> Dict[str, float]:
        arr = np.asarray(self.samples, dtype=np.float64)
        p10, median, p90 = np.percentile(arr, [10, 50, 90])
        return {"median": float(median), "p10": float(p10), "p90": float(p90)}

    @property
    def median(self) -> float:
        return float(np.median(np.asarray(self.samples, dtype=np.float64)))

    @property
    def mean(self) -> float:
        return float(np.mean(np.asarray(self.samples, dtype=np.float64)))

    def params_text(self) -> str:
        return ";".join(f"{k}={self.params[k]}" for k in sorted(self.params))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "params": dict(sorted(self.params.items())),
            "summary": self.summary,
            "samples": list(self.samples),
            "extra": dict(sorted(self.extra.items())),
        }


def to_csv(results: Iterable[BenchResult]) -> str:
    """CSV，列顺序固定，samples 以空格分隔"""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in results:
        s = r.summary
        writer.writerow([
            r.name,
            r.params_text(),
            f"{s['median']:.1f}",
            f"{s['p10']:.1f}",
            f"{s['p90']:.1f}",
            " ".join(f"{x:.1f}" for x in r.samples),
        ])
    return buf.getvalue()


def to_json(results: Iterable[BenchResult]) -> str:
    return json.dumps([r.to_dict() for r in results], indent=2, ensure_ascii=False)


def write_results(results: Sequence[BenchResult], out: Optional[Union[str, Path]] = None, fmt: str = "csv") -> str:
    """按格式序列化结果，给出 out 时同时写入文件

    Returns:
        str: 序列化后的文本
    """
    if fmt not in ("csv", "json"):
        raise BenchError(BenchError.BAD_PARAMS, f"不支持的输出格式: {fmt}")
    text = to_csv(results) if fmt == "csv" else to_json(results)
    if out is not None:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        logger.info(f"结果已写入 {path} ({len(results)} 项)")
    return text
