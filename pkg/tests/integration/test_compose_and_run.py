"""组合并启动示例应用的集成测试"""
from typing import List

import pytest

from src.alloc.base import BackendKind
from src.apps import netserver
from src.boot.boot import BootConfig, boot
from src.main import UkLibOS


class _Console:
    def __init__(self):
        self.chunks: List[bytes] = []

    def __call__(self, data: bytes) -> None:
        self.chunks.append(bytes(data))

    @property
    def text(self) -> str:
        return b"".join(self.chunks).decode("utf-8")


@pytest.fixture
def system(config) -> UkLibOS:
    return UkLibOS(config)


@pytest.fixture
def console() -> _Console:
    return _Console()


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for name in ("UK_HEAP_BYTES", "UK_MEM_STRATEGY"):
        monkeypatch.delenv(name, raising=False)


def test_helloworld(system, configs_dir, console):
    """测试 helloworld 只经过启动和系统调用垫片"""
    report = system.run(str(configs_dir / "helloworld.config"), extras={"console": console})
    assert report.exit_code == 0
    assert console.text == "Hello world!\n"
    assert report.stages == ["platform_init", "heap_provision"]
    assert report.boot_allocator is None and not report.with_scheduler


def test_helloworld_custom_message(system, configs_dir, console):
    """测试经 extras 传入的消息"""
    report = system.run(str(configs_dir / "helloworld.config"), extras={"console": console, "message": "hi\n"})
    assert report.exit_code == 0
    assert console.text == "hi\n"


def test_netserver_with_scheduler(system, configs_dir, console):
    """测试带调度器的回显服务"""
    report = system.run(str(configs_dir / "netserver.config"), extras={"console": console, "requests": 40})
    assert report.exit_code == 0
    assert report.with_scheduler
    assert report.boot_allocator == "region" and report.main_allocator == "buddy"
    assert "sched_init" in report.stages and "main_alloc_init" in report.stages
    assert console.text == "netserver: served 40 requests\n"


def test_netserver_polling(config, console):
    """测试无调度器时在同一上下文里轮询"""
    seen = {}

    def hook(ctx):
        ctx.extras.update(console=console, requests=12, config=config)
        seen["ctx"] = ctx

    cfg = BootConfig(heap_bytes=8 << 20, boot_allocator=BackendKind.TLSF, main=netserver)
    report = boot(cfg, apply_env=False, context_hook=hook)
    assert report.exit_code == 0
    replies = seen["ctx"].extras["replies"]
    assert sorted(replies) == sorted(f"HELLO {i}".encode() for i in range(12))
    assert console.text == "netserver: served 12 requests\n"


def test_kvstore(system, configs_dir, console):
    """测试专用化键值服务的组合"""
    report = system.run(str(configs_dir / "kvstore.config"), extras={"console": console, "requests": 200})
    assert report.exit_code == 0
    assert report.boot_allocator == "tlsf" and not report.with_scheduler
    assert console.text.startswith("kvstore: served 200 requests")


def test_all_features_runs_selected_app(system, configs_dir, console):
    """测试包含全部应用的组合按 --app 选择应用"""
    report = system.run(str(configs_dir / "all-features.config"), app="app-helloworld", extras={"console": console})
    assert report.exit_code == 0
    assert report.main_allocator == "tlsf"
    assert report.with_scheduler
    assert console.text == "Hello world!\n"
