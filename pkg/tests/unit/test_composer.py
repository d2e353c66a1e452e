"""组合器单元测试"""
import json
from pathlib import Path

import pytest

from src.alloc.base import BackendKind
from src.apps import helloworld
from src.composer.generators import (
    app_config_from_plan,
    boot_config_from_plan,
    emit_build_plan,
    emit_dot,
    size_report,
    topological_order,
)
from src.composer.manifest import load_registry, parse_manifest, parse_selections
from src.composer.resolver import resolve
from src.errors import ComposerError


ROOT_DIR = Path(__file__).resolve().parent.parent.parent
BACKENDS = ["libukallocbuddy", "libukallocregion", "libukalloctinyfree", "libukalloctlsf"]


@pytest.fixture(scope="module")
def shipped():
    """随仓库发布的注册表"""
    return load_registry([ROOT_DIR / "libs"])


def _plan(shipped, configs_dir, name):
    sel = parse_selections(configs_dir / f"{name}.config", shipped)
    return emit_build_plan(resolve(shipped, sel))


def _registry(tmp_path, text, name="test.uklib"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return load_registry([path])


def test_shipped_registry(shipped):
    """测试仓库自带清单"""
    assert "libukboot" in shipped
    assert shipped.providers("ukalloc") == BACKENDS
    assert "ukalloc" in shipped.apis
    assert shipped["libukalloctlsf"].options["sl_subdivisions"] == 16


def test_helloworld_closure(shipped, configs_dir):
    """测试 helloworld 的闭包不含分配器和调度器"""
    graph = resolve(shipped, parse_selections(configs_dir / "helloworld.config", shipped))
    assert graph.names() == ["app-helloworld", "libsyscall_shim", "libukboot", "libukplat"]
    assert graph.provider_of == {"syscall_shim": "libsyscall_shim"}
    assert graph.options("libukboot")["heap_bytes"] == 4194304
    plan = emit_build_plan(graph)
    assert plan.components == ["libukplat", "libsyscall_shim", "libukboot", "app-helloworld"]
    assert not any(c in plan.components for c in BACKENDS + ["libuksched"])
    assert plan.features["CONFIG_SYSCALL_SHIM_PROVIDER"] == "libsyscall_shim"
    assert plan.features["CONFIG_APP_HELLOWORLD"] is True


def test_order_puts_dependencies_first(shipped, configs_dir):
    """测试构建顺序中依赖总在依赖者之前"""
    for name in ("helloworld", "netserver", "kvstore", "all-features"):
        graph = resolve(shipped, parse_selections(configs_dir / f"{name}.config", shipped))
        order = topological_order(graph)
        assert sorted(order) == graph.names()
        position = {n: i for i, n in enumerate(order)}
        for src, dst in graph.edges:
            assert position[dst] < position[src]


def test_closure_is_complete(shipped, configs_dir):
    """测试每个依赖项都解析到图中的节点"""
    graph = resolve(shipped, parse_selections(configs_dir / "all-features.config", shipped))
    for name, lib in graph.nodes.items():
        for dep in lib.depends:
            target = dep if dep in shipped else graph.provider_of[dep]
            assert target in graph.nodes
            assert (name, target) in graph.edges
    assert graph.provider_of["ukalloc"] == "libukalloctlsf"


def test_ambiguous_provider(shipped):
    """测试多个候选时不做隐式选择"""
    with pytest.raises(ComposerError) as exc:
        resolve(shipped, ["libuknetdev"])
    assert exc.value.code == ComposerError.AMBIGUOUS_PROVIDER
    assert exc.value.candidates == BACKENDS
    with pytest.raises(ComposerError) as exc:
        resolve(shipped, ["libuknetdev", "libukalloctlsf", "libukallocbuddy"])
    assert exc.value.code == ComposerError.AMBIGUOUS_PROVIDER
    assert exc.value.candidates == ["libukallocbuddy", "libukalloctlsf"]


def test_provider_choices(shipped):
    """测试显式指定和唯一已选的提供者"""
    graph = resolve(shipped, ["libuknetdev"], {"ukalloc": "libukallocregion"})
    assert graph.provider_of["ukalloc"] == "libukallocregion"
    assert "libukalloctlsf" not in graph.nodes
    graph = resolve(shipped, ["libuknetdev", "libukalloctinyfree"])
    assert graph.provider_of["ukalloc"] == "libukalloctinyfree"
    with pytest.raises(ComposerError) as exc:
        resolve(shipped, ["libuknetdev"], {"ukalloc": "libramfs"})
    assert exc.value.code == ComposerError.UNSATISFIED_DEPENDENCY
    with pytest.raises(ComposerError) as exc:
        resolve(shipped, ["libuknetdev"], {"ukalloc": "libnothing"})
    assert exc.value.code == ComposerError.UNKNOWN_LIBRARY


def test_undeclared_option_is_parse_error(shipped, selections_file):
    """测试清单中没有声明的选项报出行列号"""
    path = selections_file("CONFIG_LIBUKALLOCTLSF=y\n\n  CONFIG_LIBUKALLOCTLSF_SL_SUBDIVISION=32\n")
    with pytest.raises(ComposerError) as exc:
        parse_selections(path, shipped)
    assert exc.value.code == ComposerError.PARSE_ERROR
    assert exc.value.details["line"] == 3
    assert exc.value.details["column"] == len("CONFIG_LIBUKALLOCTLSF_") + 1
    assert "sl_subdivision" in exc.value.message
    with pytest.raises(ComposerError) as exc:
        parse_selections("CONFIG_LIBUKALLOC_MIN_BLOCK=64\n", shipped)
    assert exc.value.code == ComposerError.PARSE_ERROR
    sel = parse_selections("CONFIG_LIBUKALLOCBUDDY_MIN_BLOCK=64\n", shipped)
    assert sel.options == {"libukallocbuddy": {"min_block": 64}}


def test_deselected_dependency(shipped):
    """测试依赖被显式关闭"""
    sel = parse_selections("CONFIG_APP_HELLOWORLD=y\nCONFIG_LIBUKBOOT=n\n", shipped)
    with pytest.raises(ComposerError) as exc:
        resolve(shipped, sel)
    assert exc.value.code == ComposerError.UNSATISFIED_DEPENDENCY
    assert exc.value.details["requirement"] == "libukboot"


def test_dependency_cycle(tmp_path):
    """测试依赖环并报告环上的库"""
    registry = _registry(tmp_path, "lib a\ndepends b\nlib b\ndepends c\nlib c\ndepends a\nlib d\n")
    with pytest.raises(ComposerError) as exc:
        resolve(registry, ["a"])
    assert exc.value.code == ComposerError.DEPENDENCY_CYCLE
    assert exc.value.cycle == ["a", "b", "c"]
    assert resolve(registry, ["d"]).names() == ["d"]


def test_api_without_provider(tmp_path):
    """测试声明了但没有提供者的 API"""
    registry = _registry(tmp_path, "api foo\nlib a\ndepends foo\n")
    with pytest.raises(ComposerError) as exc:
        resolve(registry, ["a"])
    assert exc.value.code == ComposerError.UNSATISFIED_DEPENDENCY


def test_unknown_selection(shipped):
    """测试选择了未注册的库"""
    with pytest.raises(ComposerError) as exc:
        resolve(shipped, ["libnothing"])
    assert exc.value.code == ComposerError.UNKNOWN_LIBRARY


@pytest.mark.parametrize(
    "text,line,column",
    [
        ("lib a\n  depends\n", 2, 10),
        ("lib a\nfrobnicate x\n", 2, 1),
        ("lib 9a\n", 1, 5),
        ("depends b\n", 1, 1),
        ("lib a\noption key\n", 2, 8),
    ],
)
def test_manifest_parse_errors(text, line, column):
    """测试清单语法错误带行列号"""
    with pytest.raises(ComposerError) as exc:
        parse_manifest(text, "t.uklib")
    assert exc.value.code == ComposerError.PARSE_ERROR
    assert (exc.value.line, exc.value.column) == (line, column)


def test_undeclared_dependency(tmp_path):
    """测试依赖既不是库也不是 API"""
    with pytest.raises(ComposerError) as exc:
        _registry(tmp_path, "lib a\ndepends nothing\n")
    assert exc.value.code == ComposerError.PARSE_ERROR
    assert (exc.value.line, exc.value.column) == (2, 9)


def test_duplicate_library(tmp_path):
    """测试两个清单定义同名库"""
    (tmp_path / "one.uklib").write_text("lib a\n", encoding="utf-8")
    (tmp_path / "two.uklib").write_text("lib a\n", encoding="utf-8")
    with pytest.raises(ComposerError) as exc:
        load_registry([tmp_path])
    assert exc.value.code == ComposerError.DUPLICATE_LIBRARY


def test_manifest_values():
    """测试选项值类型与注释"""
    libs, apis = parse_manifest("api x  # 注释\nlib a\nprovides x\noption n 0x10\noption on y\noption s hello\n")
    assert apis == {"x"}
    assert libs[0].options == {"n": 16, "on": True, "s": "hello"}


def test_selections(shipped, selections_file):
    """测试选择文件：后写覆盖、选项和提供者"""
    path = selections_file(
        "# 注释\n"
        "CONFIG_LIBUKALLOCTLSF=y\n"
        "CONFIG_LIBUKALLOCTLSF_SL_SUBDIVISIONS=32\n"
        "CONFIG_LIBUKALLOCBUDDY=y\n"
        "CONFIG_LIBUKALLOCBUDDY=n\n"
        "CONFIG_UKALLOC_PROVIDER=libukalloctlsf\n"
    )
    sel = parse_selections(path, shipped)
    assert sel.selected == ["libukalloctlsf"]
    assert sel.deselected == {"libukallocbuddy"}
    assert sel.options == {"libukalloctlsf": {"sl_subdivisions": 32}}
    assert sel.providers == {"ukalloc": "libukalloctlsf"}
    graph = resolve(shipped, sel)
    assert graph.options("libukalloctlsf")["sl_subdivisions"] == 32


def test_selection_errors(shipped):
    """测试选择文件中的错误"""
    with pytest.raises(ComposerError) as exc:
        parse_selections("CONFIG_LIBUKBOOT=maybe\n", shipped)
    assert exc.value.code == ComposerError.PARSE_ERROR
    with pytest.raises(ComposerError) as exc:
        parse_selections("LIBUKBOOT=y\n", shipped)
    assert exc.value.code == ComposerError.PARSE_ERROR
    with pytest.raises(ComposerError) as exc:
        parse_selections("CONFIG_LIBNOTHING_X=1\n", shipped)
    assert exc.value.code == ComposerError.UNKNOWN_LIBRARY


def test_outputs_are_deterministic(shipped, configs_dir):
    """测试相同输入得到逐字节相同的输出"""
    outputs = set()
    for names in (["app-netserver", "libukallocbuddy"], ["libukallocbuddy", "app-netserver"]):
        graph = resolve(shipped, names, {"ukalloc": "libukallocbuddy"})
        plan = emit_build_plan(graph)
        outputs.add((emit_dot(graph), plan.to_json(), graph.to_json()))
    assert len(outputs) == 1
    assert _plan(shipped, configs_dir, "kvstore").hash == _plan(shipped, configs_dir, "kvstore").hash
    assert _plan(shipped, configs_dir, "kvstore").hash != _plan(shipped, configs_dir, "netserver").hash


def test_dot_output(shipped, configs_dir):
    """测试 DOT 的节点、标签和边"""
    graph = resolve(shipped, parse_selections(configs_dir / "helloworld.config", shipped))
    dot = emit_dot(graph)
    assert dot.startswith("digraph uklibos {")
    assert '"app-helloworld" -> "libsyscall_shim";' in dot
    assert '"libukboot" -> "libukplat";' in dot
    assert "provides: syscall_shim" in dot
    names = [line.split('"')[1] for line in dot.splitlines() if "[label=" in line]
    assert names == graph.names()


def test_plan_json(shipped, configs_dir):
    """测试构建计划的 JSON 结构"""
    plan = _plan(shipped, configs_dir, "kvstore")
    data = json.loads(plan.to_json())
    assert set(data) == {"components", "features", "hash"}
    assert data["features"]["CONFIG_UKALLOC_PROVIDER"] == "libukalloctlsf"
    assert data["features"]["CONFIG_LIBUKNETDEV_MAX_BURST"] == 32
    assert plan.options("libuknetdev") == {"max_burst": 32, "queue_capacity": 256}


def test_size_report_counts_shared_files_once(shipped, configs_dir, tmp_path):
    """测试共享源文件只计一次"""
    plan = _plan(shipped, configs_dir, "kvstore")
    report = size_report(plan, ROOT_DIR)
    unique = {rel for name in plan.components for rel in plan.sources[name]}
    assert report["total"] == sum((ROOT_DIR / rel).stat().st_size for rel in unique)
    assert set(report["components"]) == set(plan.components)
    # 源文件不在指定根目录下时记 0
    assert size_report(plan, tmp_path)["total"] == 0


def test_helloworld_image_smaller_than_all_features(shipped, configs_dir):
    """测试 helloworld 的组件体积小于包含全部特性的组合"""
    hello = size_report(_plan(shipped, configs_dir, "helloworld"), ROOT_DIR)
    full = size_report(_plan(shipped, configs_dir, "all-features"), ROOT_DIR)
    assert 0 < hello["total"] < full["total"]
    assert "libuksched" not in hello["components"]


def test_boot_config_from_plan(shipped, configs_dir, config):
    """测试由计划推导启动配置"""
    hello = boot_config_from_plan(_plan(shipped, configs_dir, "helloworld"), shipped, config)
    assert hello.boot_allocator is None and hello.main_allocator is None
    assert not hello.with_scheduler
    assert hello.heap_bytes == 4194304
    assert hello.main is helloworld

    net = boot_config_from_plan(_plan(shipped, configs_dir, "netserver"), shipped, config)
    assert net.boot_allocator is BackendKind.REGION
    assert net.main_allocator is BackendKind.BUDDY
    assert net.with_scheduler
    assert net.sched["stack_size"] == 65536
    assert net.alloc["buddy"]["min_block"] == 32

    kv = boot_config_from_plan(_plan(shipped, configs_dir, "kvstore"), shipped, config)
    assert kv.boot_allocator is BackendKind.TLSF and kv.main_allocator is None
    assert not kv.with_scheduler
    assert kv.cmdline == "app-kvstore"

    with pytest.raises(ComposerError) as exc:
        boot_config_from_plan(_plan(shipped, configs_dir, "kvstore"), shipped, config, app="app-helloworld")
    assert exc.value.code == ComposerError.UNKNOWN_LIBRARY


def test_app_config_from_plan(shipped, configs_dir, config):
    """测试计划中的选项合并进应用配置"""
    merged = app_config_from_plan(_plan(shipped, configs_dir, "kvstore"), config)
    assert merged["netdev"]["max_burst"] == 32
    assert merged["netdev"]["window"] == config["netdev"]["window"]
    assert config["netdev"]["max_burst"] == 64
