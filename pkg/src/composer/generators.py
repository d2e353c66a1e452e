"""组合结果的输出：依赖图 DOT、构建计划、体积报告和启动配置"""
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from jinja2 import Environment, FileSystemLoader

from src.composer.manifest import Registry, config_symbol
from src.composer.resolver import ResolvedGraph
from src.errors import ComposerError

logger = logging.getLogger(__name__)

TEMPLATE_DIR = Path(__file__).parent / "templates"
ALLOC_API = "ukalloc"
SCHED_LIB = "libuksched"
BOOT_LIB = "libukboot"
APP_PREFIX = "app-"


class GraphEmitter:
    """依赖图渲染器"""

    def __init__(self, config: Optional[Dict[str, Any]] = None):
        """初始化渲染器

        Args:
            config: composer 配置段，可指定 template_dir
        """
        self.config = config or {}
        self.template_dir = Path(self.config.get("template_dir", TEMPLATE_DIR))
        self.logger = logging.getLogger(__name__)
        self.env = Environment(
            loader=FileSystemLoader(str(self.template_dir)),
            trim_blocks=True,
            lstrip_blocks=True,
            keep_trailing_newline=True,
        )

    def render(self, graph: ResolvedGraph) -> str:
        """渲染 DOT 文本，节点按名称字典序，边按 (起点, 终点) 排序

        Args:
            graph: 解析结果

        Returns:
            str: DOT 文本
        """
        try:
            nodes = []
            for name in graph.names():
                provides = sorted(graph.nodes[name].provides)
                label = name + (f"\\nprovides: {', '.join(provides)}" if provides else "")
                nodes.append({"name": name, "label": label})
            template = self.env.get_template("graph.dot.j2")
            return template.render(nodes=nodes, edges=graph.edges)
        except Exception as e:
            self.logger.error(f"渲染依赖图失败: {e}")
            raise


def emit_dot(graph: ResolvedGraph, config: Optional[Dict[str, Any]] = None) -> str:
    return GraphEmitter(config).render(graph)


@dataclass
class BuildPlan:
    """交给构建步骤的计划：依赖在前的组件顺序和功能开关"""

    components: List[str] = field(default_factory=list)
    features: Dict[str, Any] = field(default_factory=dict)
    hash: str = ""
    providers: Dict[str, str] = field(default_factory=dict)
    sources: Dict[str, List[str]] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {"components": list(self.components), "features": dict(self.features), "hash": self.hash}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def option(self, lib: str, key: str, default: Any = None) -> Any:
        return self.features.get(f"CONFIG_{config_symbol(lib)}_{key.upper()}", default)

    def options(self, lib: str) -> Dict[str, Any]:
        """某个微库在计划中的全部选项，键为小写选项名"""
        prefix = f"CONFIG_{config_symbol(lib)}_"
        return {
            k[len(prefix):].lower(): v
            for k, v in self.features.items()
            if k.startswith(prefix) and not k.endswith("_PROVIDER")
        }


def topological_order(graph: ResolvedGraph) -> List[str]:
    """Kahn 算法，同层按名称排序；依赖排在依赖者之前"""
    pending = {name: 0 for name in graph.nodes}
    dependents: Dict[str, List[str]] = {name: [] for name in graph.nodes}
    for src, dst in graph.edges:
        pending[src] += 1
        dependents[dst].append(src)
    ready = sorted(name for name, n in pending.items() if n == 0)
    order: List[str] = []
    while ready:
        name = ready.pop(0)
        order.append(name)
        for user in dependents[name]:
            pending[user] -= 1
            if pending[user] == 0:
                ready.append(user)
        ready.sort()
    return order


def emit_build_plan(graph: ResolvedGraph) -> BuildPlan:
    """生成构建计划，未选中的微库不出现在计划中

    Args:
        graph: 解析结果

    Returns:
        BuildPlan: 组件顺序、功能开关和稳定的哈希
    """
    plan = BuildPlan(components=topological_order(graph), providers=dict(graph.provider_of))
    features: Dict[str, Any] = {}
    for name in plan.components:
        features[f"CONFIG_{config_symbol(name)}"] = True
    features.update(graph.config)
    for api, lib in graph.provider_of.items():
        features[f"CONFIG_{config_symbol(api)}_PROVIDER"] = lib
    plan.features = dict(sorted(features.items()))
    plan.sources = {name: list(graph.nodes[name].sources) for name in plan.components}
    body = json.dumps({"components": plan.components, "features": plan.features}, sort_keys=True)
    plan.hash = hashlib.sha256(body.encode("utf-8")).hexdigest()
    logger.debug(f"构建计划: {len(plan.components)} 个组件, hash={plan.hash[:12]}")
    return plan


def size_report(plan: BuildPlan, root: Union[str, Path] = ".") -> Dict[str, Any]:
    """按组件统计源文件字节数，作为最终镜像体积的近似

    同一个源文件只计一次，归到先出现的组件。

    Args:
        plan: 构建计划
        root: 源文件路径的根目录

    Returns:
        Dict[str, Any]: {"components": {名称: 字节数}, "total": 总字节数}
    """
    root = Path(root)
    seen = set()
    components: Dict[str, int] = {}
    for name in plan.components:
        total = 0
        for rel in plan.sources.get(name, []):
            if rel in seen:
                continue
            seen.add(rel)
            path = root / rel
            if path.is_file():
                total += path.stat().st_size
            else:
                logger.warning(f"{name} 的源文件不存在: {path}")
        components[name] = total
    return {"components": components, "total": sum(components.values())}


def boot_config_from_plan(
    plan: BuildPlan, registry: Registry, config: Optional[Dict[str, Any]] = None, app: Optional[str] = None
):
    """由构建计划推导启动配置

    ukalloc 的提供者作为主分配器；计划中另有分配器后端时，后者作为启动分配器，
    否则提供者本身就是启动分配器。包含 libuksched 时启用调度器。

    Args:
        plan: 构建计划
        registry: 用于识别分配器后端
        config: 完整配置，boot 段作为默认值
        app: 要运行的应用，缺省取计划中的第一个应用

    Returns:
        BootConfig: 启动配置
    """
    from src.apps import APPS
    from src.boot.boot import BootConfig

    config = config or {}
    section = dict(config.get("boot", {}))
    backends = [c for c in plan.components if c in registry.providers(ALLOC_API)]
    provider = plan.providers.get(ALLOC_API)

    overrides: Dict[str, Any] = {"boot_allocator": None, "main_allocator": None}
    if provider is not None:
        main_kind = plan.option(provider, "backend")
        # region 优先作为启动分配器
        others = sorted((b for b in backends if b != provider), key=lambda b: plan.option(b, "backend") != "region")
        if others:
            overrides["boot_allocator"] = plan.option(others[0], "backend")
            overrides["main_allocator"] = main_kind
        else:
            overrides["boot_allocator"] = main_kind
    overrides["with_scheduler"] = SCHED_LIB in plan.components
    heap = plan.option(BOOT_LIB, "heap_bytes")
    if heap is not None:
        overrides["heap_bytes"] = heap
    strategy = plan.option(BOOT_LIB, "memory_strategy")
    if strategy is not None:
        overrides["memory_strategy"] = strategy
    apps = [c for c in plan.components if c.startswith(APP_PREFIX)]
    if app is None and apps:
        app = apps[0]
    if app is not None:
        if app not in apps:
            raise ComposerError(ComposerError.UNKNOWN_LIBRARY, f"应用 {app} 不在构建计划中: {apps}")
        overrides["main"] = APPS.get(app)
        overrides["cmdline"] = app

    alloc = {k: dict(v) if isinstance(v, dict) else v for k, v in config.get("alloc", {}).items()}
    for lib in backends:
        opts = plan.options(lib)
        kind = opts.pop("backend", None)
        if kind:
            alloc.setdefault(kind, {}).update(opts)
    overrides["alloc"] = alloc
    sched = dict(config.get("sched", {}))
    stack = plan.option(SCHED_LIB, "stack_size")
    if stack is not None:
        sched["stack_size"] = stack
    overrides["sched"] = sched
    return BootConfig.from_config(section, **overrides)


# 微库 -> 其选项覆盖的配置段
SECTION_OF = {
    "libuknetdev": "netdev",
    "libsyscall_shim": "syscall",
    "libvfscore": "fs",
    "libuksched": "sched",
    "libuklock": "sched",
}


def app_config_from_plan(plan: BuildPlan, config: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """把计划中各微库的选项合并进对应配置段，供应用读取"""
    merged = {k: dict(v) if isinstance(v, dict) else v for k, v in (config or {}).items()}
    for lib, section in SECTION_OF.items():
        if lib in plan.components:
            merged.setdefault(section, {}).update(plan.options(lib))
    return merged
