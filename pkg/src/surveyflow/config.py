"""dagrun.cfg parsing, validation, and translation into the pipeline graph.

The file is INI-style: ``key = value`` pairs under ``[section]`` headers,
``#`` comments, UTF-8. Sections: ``[project] [photogrammetry] [ml] [export]
[resources]``. Only ``project.input_dir`` is required; every other key has a
documented default (see docs/dagrun_reference.cfg). Unknown keys or sections
are reported through :class:`ConfigWarning`, never as errors. Parsed configs
are immutable and round-trip through :func:`serialize_config`.
"""

from __future__ import annotations

import configparser
import io
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum

from .dag import DagSpec, ResourceHint, RetryPolicy, TaskSpec

DEFAULT_CLASS_NAMES: tuple[str, ...] = (
    "background",
    "building-flooded",
    "building-non-flooded",
    "road-flooded",
    "road-non-flooded",
    "water",
    "tree",
    "vehicle",
    "pool",
    "grass",
)


class Variant(str, Enum):
    DEPTH_MAPS_DIRECT = "DEPTH_MAPS_DIRECT"
    POINT_CLOUD_FIRST = "POINT_CLOUD_FIRST"


class PointCloudFormat(str, Enum):
    PLY_ASCII = "PLY_ASCII"


class MeshFormat(str, Enum):
    OBJ = "OBJ"


class MaskFormat(str, Enum):
    PNG8 = "PNG8"


class ConfigError(ValueError):
    """A dagrun.cfg document that cannot become a valid RunConfig."""

    def __init__(self, message: str, *, key: str | None = None, line: int | None = None) -> None:
        where = f" (key {key})" if key else ""
        at = f" (line {line})" if line else ""
        super().__init__(f"{message}{where}{at}")
        self.key = key
        self.line = line


class ConfigWarning(UserWarning):
    """Non-fatal finding while parsing a dagrun.cfg document."""


@dataclass(frozen=True)
class ProjectSettings:
    name: str = "project"
    input_dir: str = ""
    output_dir: str = "./output"


@dataclass(frozen=True)
class PhotogrammetrySettings:
    variant: Variant = Variant.DEPTH_MAPS_DIRECT
    blur_variance_min: float = 100.0
    overexposed_pixel_value: int = 250
    underexposed_pixel_value: int = 5
    exposure_fraction_max: float = 0.30
    grid_resolution: int = 64


@dataclass(frozen=True)
class MlSettings:
    enabled: bool = True
    class_count: int = 10
    class_names: tuple[str, ...] = DEFAULT_CLASS_NAMES
    target_long_side_px: int = 1024
    batch_size: int = 4


@dataclass(frozen=True)
class ExportSettings:
    point_cloud_format: PointCloudFormat = PointCloudFormat.PLY_ASCII
    mesh_format: MeshFormat = MeshFormat.OBJ
    mask_format: MaskFormat = MaskFormat.PNG8


@dataclass(frozen=True)
class ResourceSettings:
    cpus: int = 4
    memory_mb: int = 4096
    gpus: int = 0


@dataclass(frozen=True)
class RunConfig:
    project: ProjectSettings = field(default_factory=ProjectSettings)
    photogrammetry: PhotogrammetrySettings = field(default_factory=PhotogrammetrySettings)
    ml: MlSettings = field(default_factory=MlSettings)
    export: ExportSettings = field(default_factory=ExportSettings)
    resources: ResourceSettings = field(default_factory=ResourceSettings)


_KNOWN_KEYS: dict[str, set[str]] = {
    "project": {"name", "input_dir", "output_dir"},
    "photogrammetry": {
        "variant",
        "blur_variance_min",
        "overexposed_pixel_value",
        "underexposed_pixel_value",
        "exposure_fraction_max",
        "grid_resolution",
    },
    "ml": {"enabled", "class_count", "class_names", "target_long_side_px", "batch_size"},
    "export": {"point_cloud_format", "mesh_format", "mask_format"},
    "resources": {"cpus", "memory_mb", "gpus"},
}


def parse_config(text: str) -> RunConfig:
    """Parse a dagrun.cfg document.

    Raises :class:`ConfigError` for syntax errors (with the offending line
    number), missing required keys, or invariant violations (named key).
    Unknown keys and sections only warn.
    """
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=None)
    parser.optionxform = str  # keep key case
    try:
        parser.read_string(text)
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if getattr(exc, "errors", None) else None
        raise ConfigError(f"syntax error: {exc.message.splitlines()[0]}", line=line) from exc
    except configparser.Error as exc:
        raise ConfigError(f"syntax error: {exc}") from exc

    for section in parser.sections():
        if section not in _KNOWN_KEYS:
            warnings.warn(f"unknown section [{section}]", ConfigWarning, stacklevel=2)
            continue
        for key in parser[section]:
            if key not in _KNOWN_KEYS[section]:
                warnings.warn(f"unknown key {section}.{key}", ConfigWarning, stacklevel=2)

    def get(section: str, key: str) -> str | None:
        if parser.has_section(section) and key in parser[section]:
            return parser[section][key].strip()
        return None

    project = ProjectSettings(
        name=get("project", "name") or ProjectSettings.name,
        input_dir=get("project", "input_dir") or "",
        output_dir=get("project", "output_dir") or ProjectSettings.output_dir,
    )
    if not project.input_dir:
        raise ConfigError("missing required key", key="project.input_dir")

    photo = PhotogrammetrySettings(
        variant=_parse_enum(Variant, get("photogrammetry", "variant"), "photogrammetry.variant", Variant.DEPTH_MAPS_DIRECT),
        blur_variance_min=_parse_number(get("photogrammetry", "blur_variance_min"), "photogrammetry.blur_variance_min", 100.0, minimum=0.0),
        overexposed_pixel_value=_parse_integer(get("photogrammetry", "overexposed_pixel_value"), "photogrammetry.overexposed_pixel_value", 250, minimum=0, maximum=255),
        underexposed_pixel_value=_parse_integer(get("photogrammetry", "underexposed_pixel_value"), "photogrammetry.underexposed_pixel_value", 5, minimum=0, maximum=255),
        exposure_fraction_max=_parse_number(get("photogrammetry", "exposure_fraction_max"), "photogrammetry.exposure_fraction_max", 0.30, minimum=0.0, maximum=1.0),
        grid_resolution=_parse_integer(get("photogrammetry", "grid_resolution"), "photogrammetry.grid_resolution", 64, minimum=1),
    )
    if photo.underexposed_pixel_value >= photo.overexposed_pixel_value:
        raise ConfigError(
            "underexposed_pixel_value must be below overexposed_pixel_value",
            key="photogrammetry.underexposed_pixel_value",
        )

    class_count = _parse_integer(get("ml", "class_count"), "ml.class_count", 10, minimum=2)
    names_raw = get("ml", "class_names")
    if names_raw is None:
        if class_count == len(DEFAULT_CLASS_NAMES):
            class_names = DEFAULT_CLASS_NAMES
        else:
            class_names = tuple(f"class-{i}" for i in range(class_count))
    else:
        class_names = tuple(p.strip() for p in names_raw.split(",") if p.strip())
    if len(class_names) != class_count:
        raise ConfigError(
            f"class_names lists {len(class_names)} names but class_count is {class_count}",
            key="ml.class_names",
        )
    if len(set(class_names)) != len(class_names):
        raise ConfigError("class_names must be unique", key="ml.class_names")

    ml = MlSettings(
        enabled=_parse_bool(get("ml", "enabled"), "ml.enabled", True),
        class_count=class_count,
        class_names=class_names,
        target_long_side_px=_parse_integer(get("ml", "target_long_side_px"), "ml.target_long_side_px", 1024, minimum=1),
        batch_size=_parse_integer(get("ml", "batch_size"), "ml.batch_size", 4, minimum=1),
    )

    export = ExportSettings(
        point_cloud_format=_parse_enum(PointCloudFormat, get("export", "point_cloud_format"), "export.point_cloud_format", PointCloudFormat.PLY_ASCII),
        mesh_format=_parse_enum(MeshFormat, get("export", "mesh_format"), "export.mesh_format", MeshFormat.OBJ),
        mask_format=_parse_enum(MaskFormat, get("export", "mask_format"), "export.mask_format", MaskFormat.PNG8),
    )

    resources = ResourceSettings(
        cpus=_parse_integer(get("resources", "cpus"), "resources.cpus", 4, minimum=1),
        memory_mb=_parse_integer(get("resources", "memory_mb"), "resources.memory_mb", 4096, minimum=1),
        gpus=_parse_integer(get("resources", "gpus"), "resources.gpus", 0, minimum=0),
    )

    return RunConfig(project=project, photogrammetry=photo, ml=ml, export=export, resources=resources)


def serialize_config(config: RunConfig) -> str:
    """Canonical dagrun.cfg text; ``parse_config(serialize_config(c)) == c``."""
    out = io.StringIO()
    out.write("[project]\n")
    out.write(f"name = {config.project.name}\n")
    out.write(f"input_dir = {config.project.input_dir}\n")
    out.write(f"output_dir = {config.project.output_dir}\n\n")

    p = config.photogrammetry
    out.write("[photogrammetry]\n")
    out.write(f"variant = {p.variant.value}\n")
    out.write(f"blur_variance_min = {p.blur_variance_min!r}\n")
    out.write(f"overexposed_pixel_value = {p.overexposed_pixel_value}\n")
    out.write(f"underexposed_pixel_value = {p.underexposed_pixel_value}\n")
    out.write(f"exposure_fraction_max = {p.exposure_fraction_max!r}\n")
    out.write(f"grid_resolution = {p.grid_resolution}\n\n")

    m = config.ml
    out.write("[ml]\n")
    out.write(f"enabled = {'true' if m.enabled else 'false'}\n")
    out.write(f"class_count = {m.class_count}\n")
    out.write(f"class_names = {', '.join(m.class_names)}\n")
    out.write(f"target_long_side_px = {m.target_long_side_px}\n")
    out.write(f"batch_size = {m.batch_size}\n\n")

    e = config.export
    out.write("[export]\n")
    out.write(f"point_cloud_format = {e.point_cloud_format.value}\n")
    out.write(f"mesh_format = {e.mesh_format.value}\n")
    out.write(f"mask_format = {e.mask_format.value}\n\n")

    r = config.resources
    out.write("[resources]\n")
    out.write(f"cpus = {r.cpus}\n")
    out.write(f"memory_mb = {r.memory_mb}\n")
    out.write(f"gpus = {r.gpus}\n")
    return out.getvalue()


# Task params understood by the engine at run creation:
#   variant_only = <Variant>  -> SKIPPED unless the config selects that variant
#   requires_ml = true        -> SKIPPED when ml.enabled is false
PHOTOGRAMMETRY_TASKS = (
    "pg01_setup",
    "pg02_import",
    "pg03_filter",
    "pg04_align",
    "pg05_depth",
    "pg06_cloud",
    "pg07_tiled",
    "pg08_mesh_cloud",
    "pg08_mesh_depth",
    "pg09_texture",
    "pg10_export",
)

ML_TASKS = (
    "ml01_workspace",
    "ml02_downscale",
    "ml03_infer",
    "ml04_validate",
    "ml05_upscale",
    "ml06_split",
    "ml07_classify",
    "ml08_export",
    "ml09_cleanup",
)


def config_to_dag(config: RunConfig) -> DagSpec:
    """Emit the pipeline graph the configuration selects.

    The photogrammetric chain is always present. Tasks belonging to the
    non-selected reconstruction variant are still emitted, tagged with a
    ``variant_only`` param so the engine marks them SKIPPED instead of
    dropping them (run records stay comparable across variants). The
    segmentation chain is appended only when ``ml.enabled``.
    """
    cpus = config.resources.cpus
    wide = ResourceHint(cpus=cpus, memory_mb=config.resources.memory_mb, gpus=0)
    single = ResourceHint(cpus=1, memory_mb=config.resources.memory_mb, gpus=0)
    gpu_hint = ResourceHint(cpus=1, memory_mb=config.resources.memory_mb, gpus=config.resources.gpus)

    def task(task_id: str, kind: str, upstream: tuple[str, ...] = (), params: dict[str, str] | None = None, hint: ResourceHint = single) -> TaskSpec:
        return TaskSpec(
            task_id=task_id,
            kind=kind,
            params=params or {},
            upstream=upstream,
            retry_policy=RetryPolicy(max_retries=0, backoff_seconds=0.0),
            resource_hint=hint,
        )

    tasks = [
        task("pg01_setup", "project_setup"),
        task("pg02_import", "import_images", ("pg01_setup",)),
        task("pg03_filter", "quality_filter", ("pg02_import",), hint=wide),
        task("pg04_align", "align_cameras", ("pg03_filter",)),
        task("pg05_depth", "build_depth_maps", ("pg04_align",), hint=wide),
        task(
            "pg06_cloud",
            "build_point_cloud",
            ("pg05_depth",),
            params={"source": "depth_maps" if config.photogrammetry.variant is Variant.DEPTH_MAPS_DIRECT else "point_cloud_first"},
        ),
        task("pg07_tiled", "build_tiled_model", ("pg06_cloud",), params={"levels": "2"}),
        task(
            "pg08_mesh_depth",
            "build_mesh",
            ("pg05_depth", "pg06_cloud"),
            params={"source": "depth_maps", "variant_only": Variant.DEPTH_MAPS_DIRECT.value},
        ),
        task(
            "pg08_mesh_cloud",
            "build_mesh",
            ("pg06_cloud",),
            params={"source": "point_cloud", "variant_only": Variant.POINT_CLOUD_FIRST.value},
        ),
        task(
            "pg09_texture",
            "texture_mesh",
            ("pg08_mesh_cloud", "pg03_filter"),
            params={"variant_only": Variant.POINT_CLOUD_FIRST.value},
        ),
        task(
            "pg10_export",
            "export_artifacts",
            ("pg06_cloud", "pg07_tiled", "pg08_mesh_depth", "pg09_texture"),
        ),
    ]

    if config.ml.enabled:
        ml_params = {"requires_ml": "true"}
        tasks.extend(
            [
                task("ml01_workspace", "ml_workspace_create", ("pg03_filter",), params=dict(ml_params)),
                task("ml02_downscale", "ml_downscale", ("ml01_workspace",), params=dict(ml_params), hint=wide),
                task("ml03_infer", "ml_infer", ("ml02_downscale",), params={**ml_params, "adapter": "stub"}, hint=gpu_hint),
                task("ml04_validate", "ml_validate", ("ml03_infer",), params=dict(ml_params), hint=wide),
                task("ml05_upscale", "ml_upscale", ("ml04_validate",), params=dict(ml_params), hint=wide),
                task("ml06_split", "ml_split_masks", ("ml05_upscale",), params=dict(ml_params), hint=wide),
                task("ml07_classify", "ml_classify_cloud", ("ml06_split", "pg06_cloud", "pg04_align"), params=dict(ml_params)),
                task("ml08_export", "ml_export", ("ml06_split", "ml07_classify"), params=dict(ml_params)),
                task("ml09_cleanup", "ml_workspace_cleanup", ("ml08_export",), params=dict(ml_params)),
            ]
        )

    dag_id = f"{_slug(config.project.name)}-pipeline"
    return DagSpec(dag_id=dag_id, version=1, tasks=tuple(tasks))


def skip_reason(task: TaskSpec, config: RunConfig) -> str | None:
    """Why a task would be SKIPPED under this config, or None if it runs."""
    variant_only = task.params.get("variant_only")
    if variant_only and variant_only != config.photogrammetry.variant.value:
        return f"inactive under variant {config.photogrammetry.variant.value}"
    if task.params.get("requires_ml") == "true" and not config.ml.enabled:
        return "ml disabled"
    return None


def _slug(name: str) -> str:
    cleaned = "".join(c if c.isalnum() or c in "-_" else "-" for c in name.strip().lower())
    return cleaned.strip("-") or "project"


def _parse_enum(enum_cls, raw: str | None, key: str, default):
    if raw is None:
        return default
    try:
        return enum_cls(raw)
    except ValueError:
        allowed = ", ".join(m.value for m in enum_cls)
        raise ConfigError(f"must be one of {allowed}, got {raw!r}", key=key) from None


def _parse_bool(raw: str | None, key: str, default: bool) -> bool:
    if raw is None:
        return default
    lowered = raw.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    raise ConfigError(f"must be true or false, got {raw!r}", key=key)


def _parse_integer(raw: str | None, key: str, default: int, *, minimum: int, maximum: int | None = None) -> int:
    if raw is None:
        return default
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"must be an integer, got {raw!r}", key=key) from None
    if value < minimum or (maximum is not None and value > maximum):
        bound = f">= {minimum}" if maximum is None else f"in [{minimum}, {maximum}]"
        raise ConfigError(f"must be {bound}, got {value}", key=key)
    return value


def _parse_number(raw: str | None, key: str, default: float, *, minimum: float, maximum: float | None = None) -> float:
    if raw is None:
        return default
    try:
        value = float(raw)
    except ValueError:
        raise ConfigError(f"must be a number, got {raw!r}", key=key) from None
    if value < minimum or (maximum is not None and value > maximum):
        bound = f">= {minimum}" if maximum is None else f"in [{minimum}, {maximum}]"
        raise ConfigError(f"must be {bound}, got {value}", key=key)
    return value


def with_input_dir(config: RunConfig, input_dir: str) -> RunConfig:
    """Convenience for tests and demos: same config, different input directory."""
    return replace(config, project=replace(config.project, input_dir=input_dir))
