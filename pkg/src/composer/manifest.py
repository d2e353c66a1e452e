"""微库清单与选择文件

清单是按行组织的文本，一个文件可以包含多个库：

    lib <name>
    api <api-name>              # 声明 API 名称
    provides <api-name>
    depends <library-or-api>
    option <key> <default>
    source <相对仓库根的源文件路径>

选择文件沿用 .config 的写法：CONFIG_<LIB>=y|n、CONFIG_<LIB>_<OPTION>=<value>，
以及 CONFIG_<API>_PROVIDER=<lib> 指定 API 的提供者。同一文件内后写的值覆盖先写的。
"""
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Set, Tuple, Union

from src.errors import ComposerError

logger = logging.getLogger(__name__)

_NAME_RE = re.compile(r"^[A-Za-z][A-Za-z0-9_\-]*$")
_KEYWORDS = ("lib", "api", "provides", "depends", "option", "source")


def config_symbol(name: str) -> str:
    """库名或 API 名对应的 CONFIG 符号后缀"""
    return re.sub(r"[^A-Za-z0-9]", "_", name).upper()


def parse_value(raw: str) -> Any:
    """选项值：y/n 为布尔，纯数字为整数，其余为字符串"""
    if raw in ("y", "n"):
        return raw == "y"
    try:
        return int(raw, 0)
    except ValueError:
        return raw.strip('"')


@dataclass
class LibrarySpec:
    """微库元数据"""

    name: str
    provides: Set[str] = field(default_factory=set)
    depends: Set[str] = field(default_factory=set)
    options: Dict[str, Any] = field(default_factory=dict)
    sources: List[str] = field(default_factory=list)
    path: str = ""
    line: int = 0
    # 依赖项的位置，用于事后校验时报告
    depend_locations: Dict[str, Tuple[int, int]] = field(default_factory=dict)

    @property
    def symbol(self) -> str:
        return config_symbol(self.name)


@dataclass
class Registry:
    """库注册表"""

    libraries: Dict[str, LibrarySpec] = field(default_factory=dict)
    apis: Set[str] = field(default_factory=set)

    def __contains__(self, name: str) -> bool:
        return name in self.libraries

    def __getitem__(self, name: str) -> LibrarySpec:
        try:
            return self.libraries[name]
        except KeyError:
            raise ComposerError(ComposerError.UNKNOWN_LIBRARY, f"未注册的库: {name}")

    def names(self) -> List[str]:
        return sorted(self.libraries)

    def providers(self, api: str) -> List[str]:
        return sorted(n for n, lib in self.libraries.items() if api in lib.provides)

    def by_symbol(self) -> Dict[str, str]:
        return {lib.symbol: name for name, lib in self.libraries.items()}


def _parse_error(path: str, line: int, column: int, message: str) -> ComposerError:
    return ComposerError(
        ComposerError.PARSE_ERROR,
        f"{path}:{line}:{column}: {message}",
        path=path,
        line=line,
        column=column,
    )


def parse_manifest(text: str, path: str = "<manifest>") -> Tuple[List[LibrarySpec], Set[str]]:
    """解析一个清单文件

    Returns:
        Tuple[List[LibrarySpec], Set[str]]: 库列表和声明的 API 名称
    """
    libs: List[LibrarySpec] = []
    apis: Set[str] = set()
    current: Optional[LibrarySpec] = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        indent = len(line) - len(line.lstrip())
        tokens = line.split()
        keyword = tokens[0]
        if keyword not in _KEYWORDS:
            raise _parse_error(path, lineno, indent + 1, f"未知的关键字 {keyword!r}")
        arg_col = line.index(tokens[1], indent + len(keyword)) + 1 if len(tokens) > 1 else len(line) + 1
        if keyword == "option":
            if len(tokens) < 3:
                raise _parse_error(path, lineno, arg_col, "option 需要键和默认值")
        elif len(tokens) != 2:
            raise _parse_error(path, lineno, arg_col, f"{keyword} 需要且只需要一个参数")
        arg = tokens[1]
        if keyword != "source" and not _NAME_RE.match(arg):
            raise _parse_error(path, lineno, arg_col, f"非法的名称 {arg!r}")

        if keyword == "lib":
            current = LibrarySpec(name=arg, path=path, line=lineno)
            libs.append(current)
            continue
        if keyword == "api":
            apis.add(arg)
            continue
        if current is None:
            raise _parse_error(path, lineno, indent + 1, f"{keyword} 出现在 lib 之前")
        if keyword == "provides":
            current.provides.add(arg)
            apis.add(arg)
        elif keyword == "depends":
            current.depends.add(arg)
            current.depend_locations[arg] = (lineno, arg_col)
        elif keyword == "option":
            current.options[arg] = parse_value(" ".join(tokens[2:]))
        elif keyword == "source":
            current.sources.append(arg)
    return libs, apis


def load_registry(paths: Iterable[Union[str, Path]]) -> Registry:
    """加载并合并多个清单

    依赖项必须是已注册的库名或已声明的 API 名。
    """
    registry = Registry()
    files: List[Path] = []
    for p in paths:
        p = Path(p)
        files.extend(sorted(p.glob("*.uklib")) if p.is_dir() else [p])
    for file in files:
        try:
            text = file.read_text(encoding="utf-8")
        except OSError as e:
            logger.error(f"读取清单失败 {file}: {e}")
            raise ComposerError(ComposerError.PARSE_ERROR, f"无法读取清单 {file}: {e}", path=str(file), line=0, column=0)
        libs, apis = parse_manifest(text, str(file))
        registry.apis |= apis
        for lib in libs:
            if lib.name in registry.libraries:
                first = registry.libraries[lib.name]
                raise ComposerError(
                    ComposerError.DUPLICATE_LIBRARY,
                    f"库 {lib.name} 重复定义: {first.path}:{first.line} 与 {lib.path}:{lib.line}",
                )
            registry.libraries[lib.name] = lib

    for lib in registry.libraries.values():
        for dep in sorted(lib.depends):
            if dep not in registry.libraries and dep not in registry.apis:
                line, column = lib.depend_locations[dep]
                raise _parse_error(lib.path, line, column, f"{lib.name} 依赖未声明的名称 {dep!r}")
    logger.debug(f"注册表加载完成: {len(registry.libraries)} 个库, {len(registry.apis)} 个 API")
    return registry


@dataclass
class Selections:
    """选择文件内容"""

    libraries: Dict[str, bool] = field(default_factory=dict)
    options: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    providers: Dict[str, str] = field(default_factory=dict)

    @property
    def selected(self) -> List[str]:
        return sorted(n for n, on in self.libraries.items() if on)

    @property
    def deselected(self) -> Set[str]:
        return {n for n, on in self.libraries.items() if not on}


def parse_selections(source: Union[str, Path], registry: Registry) -> Selections:
    """解析 .config 风格的选择

    Args:
        source: 文件路径或文本内容
        registry: 用于把 CONFIG 符号映射回库名

    Returns:
        Selections: 库开关、选项和 API 提供者
    """
    path = "<selections>"
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source and "=" not in source):
        path = str(source)
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source

    symbols = registry.by_symbol()
    api_symbols = {config_symbol(a): a for a in registry.apis}
    # 长符号优先，避免 LIBUKALLOC 吞掉 LIBUKALLOCBUDDY
    ordered = sorted(symbols, key=len, reverse=True)
    sel = Selections()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if not line.startswith("CONFIG_") or "=" not in line:
            raise _parse_error(path, lineno, 1, f"无法解析的行: {line!r}")
        key, _, value = line.partition("=")
        sym = key[len("CONFIG_"):]
        value = value.strip()
        if sym in symbols:
            if value not in ("y", "n"):
                raise _parse_error(path, lineno, len(key) + 2, f"库开关只能是 y 或 n: {value!r}")
            sel.libraries[symbols[sym]] = value == "y"
            continue
        if sym.endswith("_PROVIDER") and sym[: -len("_PROVIDER")] in api_symbols:
            sel.providers[api_symbols[sym[: -len("_PROVIDER")]]] = value
            continue
        for lib_sym in ordered:
            if sym.startswith(lib_sym + "_"):
                lib = symbols[lib_sym]
                option = sym[len(lib_sym) + 1:].lower()
                if option not in registry.libraries[lib].options:
                    raise _parse_error(
                        path, lineno, len("CONFIG_") + len(lib_sym) + 2, f"{lib} 没有声明选项 {option!r}"
                    )
                sel.options.setdefault(lib, {})[option] = parse_value(value)
                break
        else:
            raise ComposerError(ComposerError.UNKNOWN_LIBRARY, f"{path}:{lineno}: 未知的配置项 {key}")
    return sel
