"""依赖解析

从选中的库出发做深度优先遍历，按依赖项闭包纳入所需的库；依赖项
若是 API 名，则在其提供者中选出唯一一个。不做隐式的平局裁决：
多个候选且没有显式选择时报 ambiguous_provider。
"""
import json
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Mapping, Optional, Set, Tuple, Union

from src.composer.manifest import LibrarySpec, Registry, Selections, config_symbol
from src.errors import ComposerError

logger = logging.getLogger(__name__)

_WHITE, _GRAY, _BLACK = 0, 1, 2


@dataclass
class ResolvedGraph:
    """解析结果"""

    nodes: Dict[str, LibrarySpec] = field(default_factory=dict)
    edges: List[Tuple[str, str]] = field(default_factory=list)
    provider_of: Dict[str, str] = field(default_factory=dict)
    config: Dict[str, Any] = field(default_factory=dict)
    selected: List[str] = field(default_factory=list)

    def names(self) -> List[str]:
        return sorted(self.nodes)

    def options(self, name: str) -> Dict[str, Any]:
        """某个库的最终选项值"""
        prefix = f"CONFIG_{config_symbol(name)}_"
        lib = self.nodes[name]
        return {key: self.config[prefix + key.upper()] for key in sorted(lib.options)}

    def to_dict(self) -> Dict[str, Any]:
        return {
            "nodes": self.names(),
            "edges": [list(e) for e in self.edges],
            "provider_of": dict(sorted(self.provider_of.items())),
            "config": dict(sorted(self.config.items())),
            "selected": list(self.selected),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


class _Resolver:
    def __init__(self, registry: Registry, selections: Selections, provider_choices: Mapping[str, str]):
        self.registry = registry
        self.selections = selections
        self.choices = dict(selections.providers)
        self.choices.update(provider_choices)
        self.deselected = selections.deselected
        self.state: Dict[str, int] = {}
        self.stack: List[str] = []
        self.edges: Set[Tuple[str, str]] = set()
        self.provider_of: Dict[str, str] = {}

    def provider(self, api: str, requester: str) -> str:
        if api in self.provider_of:
            return self.provider_of[api]
        candidates = [c for c in self.registry.providers(api) if c not in self.deselected]
        if api in self.choices:
            choice = self.choices[api]
            if choice not in self.registry:
                raise ComposerError(ComposerError.UNKNOWN_LIBRARY, f"{api} 的提供者 {choice} 未注册")
            if choice not in candidates:
                raise ComposerError(
                    ComposerError.UNSATISFIED_DEPENDENCY,
                    f"{choice} 不能提供 {api}（候选: {candidates}）",
                    requirement=api,
                    requester=requester,
                )
            chosen = choice
        else:
            picked = [c for c in candidates if self.selections.libraries.get(c)]
            if len(picked) == 1:
                chosen = picked[0]
            elif len(picked) > 1:
                raise ComposerError(
                    ComposerError.AMBIGUOUS_PROVIDER,
                    f"{api} 有多个已选提供者: {picked}",
                    candidates=picked,
                )
            elif len(candidates) == 1:
                chosen = candidates[0]
            elif not candidates:
                raise ComposerError(
                    ComposerError.UNSATISFIED_DEPENDENCY,
                    f"{requester} 需要 {api}，但没有可用的提供者",
                    requirement=api,
                    requester=requester,
                )
            else:
                raise ComposerError(
                    ComposerError.AMBIGUOUS_PROVIDER,
                    f"{api} 有多个提供者，需要 CONFIG_{config_symbol(api)}_PROVIDER 指定: {candidates}",
                    candidates=candidates,
                )
        self.provider_of[api] = chosen
        return chosen

    def target(self, requirement: str, requester: str) -> str:
        if requirement in self.registry:
            if requirement in self.deselected:
                raise ComposerError(
                    ComposerError.UNSATISFIED_DEPENDENCY,
                    f"{requester} 依赖 {requirement}，但它被显式关闭",
                    requirement=requirement,
                    requester=requester,
                )
            return requirement
        return self.provider(requirement, requester)

    def visit(self, name: str) -> None:
        state = self.state.get(name, _WHITE)
        if state == _BLACK:
            return
        if state == _GRAY:
            cycle = self.stack[self.stack.index(name):]
            raise ComposerError(
                ComposerError.DEPENDENCY_CYCLE,
                f"依赖环: {' -> '.join(cycle + [name])}",
                cycle=cycle,
            )
        self.state[name] = _GRAY
        self.stack.append(name)
        for requirement in sorted(self.registry[name].depends):
            dep = self.target(requirement, name)
            self.edges.add((name, dep))
            self.visit(dep)
        self.stack.pop()
        self.state[name] = _BLACK


def resolve(
    registry: Registry,
    selections: Union[Selections, Iterable[str]],
    provider_choices: Optional[Mapping[str, str]] = None,
) -> ResolvedGraph:
    """解析选择，得到依赖闭包

    Args:
        registry: 库注册表
        selections: Selections 或库名列表
        provider_choices: API 名 -> 提供者库名，优先于选择文件中的 *_PROVIDER

    Returns:
        ResolvedGraph: 闭合、无环、每个 API 恰有一个提供者的图
    """
    if not isinstance(selections, Selections):
        selections = Selections(libraries={name: True for name in selections})
    for name in selections.libraries:
        if name not in registry:
            raise ComposerError(ComposerError.UNKNOWN_LIBRARY, f"选择了未注册的库: {name}")

    resolver = _Resolver(registry, selections, provider_choices or {})
    for name in selections.selected:
        resolver.visit(name)

    graph = ResolvedGraph(selected=selections.selected)
    for name in sorted(resolver.state):
        lib = registry[name]
        graph.nodes[name] = lib
        overrides = selections.options.get(name, {})
        for key in sorted(lib.options):
            graph.config[f"CONFIG_{lib.symbol}_{key.upper()}"] = overrides.get(key, lib.options[key])
    graph.edges = sorted(resolver.edges)
    graph.provider_of = dict(sorted(resolver.provider_of.items()))
    logger.info(
        f"解析完成: 选中 {len(graph.selected)} 个库, 闭包 {len(graph.nodes)} 个, "
        f"依赖边 {len(graph.edges)} 条, 提供者 {graph.provider_of}"
    )
    return graph
