"""配置加载模块"""
import os
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Union

import yaml
from dotenv import load_dotenv

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_PATH = Path(__file__).resolve().parent.parent / "config.yaml"

# 环境变量 -> (配置段, 键, 类型)
ENV_OVERRIDES = {
    "UK_HEAP_BYTES": ("boot", "heap_bytes", int),
    "UK_MEM_STRATEGY": ("boot", "memory_strategy", str),
    "UK_LOG_LEVEL": ("logging", "level", str),
}


def _parse_bool(value: str) -> bool:
    return value.strip().lower() in ("1", "y", "yes", "true", "on")


def apply_env_overrides(config: Dict[str, Any]) -> Dict[str, Any]:
    """用环境变量覆盖配置

    Args:
        config: 配置信息

    Returns:
        Dict[str, Any]: 覆盖后的配置（原地修改）
    """
    for env_name, (section, key, cast) in ENV_OVERRIDES.items():
        raw = os.environ.get(env_name)
        if raw is None or raw == "":
            continue
        try:
            config.setdefault(section, {})[key] = cast(raw)
            logger.debug(f"环境变量覆盖配置: {env_name} -> {section}.{key}")
        except ValueError as e:
            logger.error(f"环境变量格式错误 {env_name}={raw!r}: {e}")
            raise

    debug = os.environ.get("UK_DEBUG")
    if debug:
        config.setdefault("alloc", {})["debug"] = _parse_bool(debug)
        config.setdefault("netdev", {})["debug"] = _parse_bool(debug)
        config.setdefault("syscall", {})["debug"] = _parse_bool(debug)
        config.setdefault("sched", {})["debug"] = _parse_bool(debug)
    return config


def load_config(path: Optional[Union[str, Path]] = None) -> Dict[str, Any]:
    """加载配置文件

    先读取 ``.env``（若存在），再读取 YAML，最后应用环境变量覆盖。

    Args:
        path: 配置文件路径，默认使用仓库根目录下的 config.yaml

    Returns:
        Dict[str, Any]: 配置信息
    """
    load_dotenv()
    config_path = Path(path) if path else DEFAULT_CONFIG_PATH
    config: Dict[str, Any] = {}
    if config_path.exists():
        try:
            with open(config_path, "r", encoding="utf-8") as f:
                config = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            logger.error(f"配置文件解析失败: {e}")
            raise
    else:
        logger.warning(f"配置文件不存在，使用默认配置: {config_path}")

    for section in ("platform", "alloc", "netdev", "sched", "fs", "syscall", "boot", "composer", "bench", "logging"):
        config.setdefault(section, {})
    return apply_env_overrides(config)
