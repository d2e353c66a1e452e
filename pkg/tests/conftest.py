"""测试配置文件"""
import logging

import pytest
from pathlib import Path
from typing import Dict, Any

from src.alloc.ukalloc import AllocatorRegistry, alloc_init
from src.boot.platform import Platform, provision_heap
from src.netdev.device import Direction
from src.netdev.loopback import loopback_pair
from src.sched.scheduler import Scheduler

# 项目根目录
ROOT_DIR = Path(__file__).parent.parent

HEAP_BYTES = 1 << 20


@pytest.fixture(scope="session")
def libs_dir() -> Path:
    """随仓库发布的库清单目录"""
    return ROOT_DIR / "libs"


@pytest.fixture(scope="session")
def configs_dir() -> Path:
    """示例选择文件目录"""
    return ROOT_DIR / "configs"


@pytest.fixture
def config(tmp_path: Path) -> Dict[str, Any]:
    """测试配置，与 config.yaml 结构一致"""
    return {
        "platform": {"page_size": 4096, "min_stack": 16384},
        "alloc": {
            "debug": False,
            "buddy": {"min_block": 32},
            "tlsf": {"sl_subdivisions": 16, "fl_index_max": 30},
            "tinyfree": {"max_blocks": 4096},
        },
        "netdev": {
            "debug": False,
            "max_queues": 8,
            "max_burst": 64,
            "queue_capacity": 256,
            "window": 64,
            "udp_payload_capacity": 2048,
        },
        "sched": {"stack_size": 65536, "trace": True, "threading": True, "debug": False},
        "fs": {"max_fds": 1024},
        "syscall": {"table_size": 512, "debug": False},
        "boot": {
            "heap_bytes": 8 * 1024 * 1024,
            "memory_strategy": "on_demand",
            "boot_allocator": "region",
            "main_allocator": None,
            "with_scheduler": False,
            "cmdline": "",
        },
        "composer": {"libs_dir": str(ROOT_DIR / "libs"), "template_dir": str(ROOT_DIR / "src" / "composer" / "templates")},
        "bench": {"reps": 3, "warmup": 0, "heap_bytes": 16 * 1024 * 1024, "duration": 0.05, "seed": 0},
        "logging": {"level": "DEBUG", "dir": str(tmp_path / "logs"), "file": False},
    }


@pytest.fixture
def region():
    """1 MiB 按需映射的内存区域"""
    r = provision_heap("on_demand", HEAP_BYTES)
    yield r
    r.close()


@pytest.fixture
def registry() -> AllocatorRegistry:
    """独立的分配器注册表"""
    return AllocatorRegistry()


@pytest.fixture
def make_handle(region, registry):
    """在测试区域上创建分配器句柄"""

    def _make(backend: str, length: int = HEAP_BYTES, base: int = 0, debug: bool = True, config: Dict[str, Any] = None):
        return alloc_init(backend, base, length, region, config=config or {}, debug=debug, registry=registry)

    return _make


@pytest.fixture(params=["region", "buddy", "tlsf", "tinyfree"])
def backend(request) -> str:
    """全部分配器后端"""
    return request.param


@pytest.fixture
def loopback(config: Dict[str, Any]):
    """已启动的一对回环设备，各一个收发队列"""
    a, b = loopback_pair(config["netdev"], ("lo0", "lo1"))
    for dev in (a, b):
        dev.configure(1, 1)
        dev.queue_configure(Direction.TX, 0, 8)
        dev.queue_configure(Direction.RX, 0, 8)
        dev.start()
    yield a, b
    a.close()
    b.close()


@pytest.fixture
def platform(config: Dict[str, Any]) -> Platform:
    """已初始化的平台"""
    p = Platform(config["platform"])
    p.init()
    return p


@pytest.fixture
def scheduler(platform: Platform, config: Dict[str, Any]) -> Scheduler:
    """协作式调度器"""
    return Scheduler(platform, config["sched"])


@pytest.fixture
def selections_file(tmp_path: Path):
    """把选择文本写到临时文件"""

    def _write(text: str, name: str = "sel.config") -> Path:
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    return _write


@pytest.fixture(autouse=True)
def reset_app_logger():
    """每个测试结束后移除 UkLibOS 安装的日志处理器"""
    yield
    logger = logging.getLogger("src")
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()
