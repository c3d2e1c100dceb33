#!/usr/bin/env python3
"""
CranioFace - Main Module
Entry point for the skull-to-face prediction pipeline

Usage:
    python main.py split --mesh head.ply --landmarks head.json --out halves/
    python main.py synth --out data/
    python main.py crossval --data data/ --methods pca,lrr --out report/
    python main.py report --report report/
    python main.py fit --data data/ --method lrr --components 15 --out model.npz
    python main.py predict --model model.npz --skull skull.json --out face.ply

Exit codes:
    0 success, 2 usage, 3 missing file, 4 format, 5 layout,
    6 geometry, 7 model, 8 alignment
"""

import argparse
import json
import logging
import os
import sys
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

import lrr
import pca_model
import validation
from correspondence import correspondence_quality, register_many, register_reference, similarity_from_landmarks
from errors import CranioError, LayoutError, from_os_error
from geodesics import densify_population
from landmarks import load_landmarks, save_template
from mesh_core import Side, TriMesh, fit_symmetry_plane, half_frame, load_mesh, save_mesh, split_half
from pipeline_settings import PipelineConfig, load_config, read_settings
from shape_table import ShapeTablePair, assemble, load_tables, save_tables
from synth import Dataset, SynthSpec, generate, load_dataset, write_dataset

log = logging.getLogger("cranioface")

USAGE_EXIT = 2


class StructuredFormatter(logging.Formatter):
    """time level logger message key=value ..."""

    def format(self, record: logging.LogRecord) -> str:
        line = f"{self.formatTime(record, '%Y-%m-%dT%H:%M:%S')} {record.levelname} {record.name} " \
               f"{record.getMessage()}"
        for key, value in getattr(record, "fields", {}).items():
            line += f" {key}={json.dumps(value) if isinstance(value, str) and ' ' in value else value}"
        if record.exc_info:
            line += " exc=" + json.dumps(self.formatException(record.exc_info))
        return line.replace("\n", " ")


def setup_logging(level: str) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(StructuredFormatter())
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(getattr(logging, level.upper(), logging.INFO))


class CliParser(argparse.ArgumentParser):
    """ArgumentParser that reports usage errors as a JSON record"""

    def error(self, message: str):
        record = {"error": "usage", "message": message, "exit_code": USAGE_EXIT, "context": {}}
        self.exit(USAGE_EXIT, json.dumps(record) + "\n")


class Pipeline:
    """
    Coordinates the pipeline stages

    Each method runs one subcommand from parsed arguments and a resolved
    configuration, and returns the process exit status.
    """

    def __init__(self, config: PipelineConfig):
        self.config = config

    # ---------- helpers ----------

    def _record_config(self, output: str, is_directory: bool = False) -> None:
        directory = output if is_directory else (os.path.dirname(output) or ".")
        self.config.save(directory)

    def corresponded_faces(self, dataset: Dataset) -> List[TriMesh]:
        """
        Deformed reference per entry

        Faces already on the reference topology are used as they are; the
        others are registered.
        """
        reference = dataset.reference
        pending = [i for i, face in enumerate(dataset.faces)
                   if face.n_vertices != reference.n_vertices
                   or not np.array_equal(face.triangles, reference.triangles)]
        faces = list(dataset.faces)
        if pending:
            log.info("registering reference", extra={"fields": {"entries": len(pending)}})
            results = register_many(reference, [dataset.faces[i] for i in pending],
                                    self.config.registration, self.config.jobs)
            for i, result in zip(pending, results):
                faces[i] = result.deformed_reference
        return faces

    def tables_from(self, args) -> Tuple[ShapeTablePair, Optional[np.ndarray]]:
        """Shape tables plus the reference face topology when it is known"""
        if args.data:
            dataset = load_dataset(args.data)
            tables = assemble(list(zip(dataset.skulls, self.corresponded_faces(dataset))),
                              dataset.names)
            return tables, dataset.reference.triangles
        tables = load_tables(args.tables)
        reference = args.reference or os.path.join(args.tables, "reference.ply")
        if args.reference or os.path.exists(reference):
            return tables, load_mesh(reference).triangles
        return tables, None

    # ---------- subcommands ----------

    def split(self, args) -> int:
        mesh = load_mesh(args.mesh)
        marks = load_landmarks(args.landmarks)
        plane = fit_symmetry_plane(marks.positions()[marks.midplane_mask()])
        stem = os.path.splitext(os.path.basename(args.mesh))[0]
        sides = [Side.RIGHT, Side.LEFT] if args.side == "both" else [Side(args.side)]
        os.makedirs(args.out, exist_ok=True)
        frames = {}
        for side in sides:
            half, half_marks = split_half(mesh, plane, side, marks)
            tag = "R" if side is Side.RIGHT else "L"
            save_mesh(half, os.path.join(args.out, f"{stem}_{tag}.ply"))
            save_template(half_marks, os.path.join(args.out, f"{stem}_{tag}.json"))
            frame = half_frame(plane, side)
            frames[side.value] = {"rotation": frame.rotation.tolist(), "offset": frame.offset,
                                  "mirrored": frame.mirrored}
        record = {"plane": {"normal": list(plane.normal), "offset": plane.offset}, "frames": frames}
        with open(os.path.join(args.out, f"{stem}_frames.json"), "w", encoding="utf-8") as f:
            json.dump(record, f, indent=2)
        self._record_config(args.out, is_directory=True)
        print(f"✂️ {len(sides)} half(s) of {stem}, plane residual "
              f"{plane.residual(marks.positions()[marks.midplane_mask()]):.3g} mm²")
        return 0

    def densify(self, args) -> int:
        if len(args.mesh) != len(args.landmarks):
            raise LayoutError("Give one --landmarks file per --mesh",
                              meshes=len(args.mesh), landmarks=len(args.landmarks))
        meshes = [load_mesh(path) for path in args.mesh]
        marks = [load_landmarks(path) for path in args.landmarks]
        settings = self.config.densify
        result = densify_population(meshes, marks, settings.iterations, settings.params,
                                    self.config.jobs)
        if len(result.landmark_sets) == 1:
            save_template(result.landmark_sets[0], args.out)
            self._record_config(args.out)
        else:
            for path, densified in zip(args.landmarks, result.landmark_sets):
                save_template(densified, os.path.join(args.out, os.path.basename(path)))
            self._record_config(args.out, is_directory=True)
        print(f"✅ {len(result.landmark_sets[0])} landmarks after {settings.iterations} "
              f"generation(s), {len(result.skipped_edges)} skipped edge(s)")
        return 0

    def register(self, args) -> int:
        reference = load_mesh(args.reference)
        target = load_mesh(args.target)
        params = self.config.registration
        if args.reference_landmarks and args.target_landmarks:
            source = load_landmarks(args.reference_landmarks)
            goal = load_landmarks(args.target_landmarks)
            shared = [pid for pid in source.ids if pid in set(goal.ids)]
            if len(shared) < 3:
                raise LayoutError("Landmark-guided start needs 3 shared landmarks", shared=len(shared))
            params.initial = similarity_from_landmarks(source.subset(shared).positions(),
                                                       goal.subset(shared).positions())
        result = register_reference(reference, target, params)
        save_mesh(result.deformed_reference, args.out)
        quality = correspondence_quality(result, target)
        backward_map = quality.pop("backward_map")
        quality["transform"] = result.transform.to_dict()
        quality["icp_iterations"] = result.icp_iterations
        if args.report:
            with open(args.report, "w", encoding="utf-8") as f:
                json.dump(quality, f, indent=2, sort_keys=True)
        if args.distance_map:
            save_mesh(target, args.distance_map, vertex_quality=backward_map)
        self._record_config(args.out)
        print(f"✅ forward mean {quality['forward']['mean']:.4f} mm, "
              f"backward median {quality['median']:.4f} mm, converged={quality['converged']}")
        return 0

    def assemble(self, args) -> int:
        dataset = load_dataset(args.data)
        tables = assemble(list(zip(dataset.skulls, self.corresponded_faces(dataset))), dataset.names)
        save_tables(tables, args.out)
        save_mesh(dataset.reference, os.path.join(args.out, "reference.ply"))
        self._record_config(args.out, is_directory=True)
        print(f"✅ tables n={tables.n}, p={tables.p}, q={tables.q}")
        return 0

    def fit(self, args) -> int:
        tables, triangles = self.tables_from(args)
        settings = self.config.fit
        if settings.method == "pca":
            model = pca_model.fit_joint_pca(tables)
            if settings.components < model.n_components:
                m = settings.components
                model.eigenvalues, model.components = model.eigenvalues[:m], model.components[:m]
            model.face_triangles = triangles
            pca_model.save_pca(model, args.out)
            count = model.n_components
        else:
            model = lrr.fit_lrr(tables, settings.components, settings.orthogonality)
            model.face_triangles = triangles
            lrr.save_lrr(model, args.out)
            count = model.r
        self._record_config(args.out)
        print(f"✅ {settings.method} model with {count} components -> {args.out}")
        return 0

    def predict(self, args) -> int:
        kind = pca_model.read_archive(args.model)[0]
        skull = load_landmarks(args.skull)
        if kind == "pca":
            model = pca_model.load_pca(args.model)
            m = model.n_components if args.components is None else args.components
            prediction = pca_model.predict(model, skull, m)
        elif kind == "lrr":
            model = lrr.load_lrr(args.model)
            if args.components is not None:
                model = lrr.truncate(model, min(args.components, model.r))
            prediction = lrr.predict(model, skull)
        else:
            raise pca_model.PcaModelError(f"Unknown model kind '{kind}'", path=args.model)
        triangles = model.face_triangles
        if args.reference:
            triangles = load_mesh(args.reference).triangles
        if triangles is None:
            raise LayoutError("Model carries no face topology; pass --reference", path=args.model)
        save_mesh(prediction.to_mesh(triangles), args.out)
        self._record_config(args.out)
        print(f"✅ predicted face -> {args.out}")
        return 0

    def crossval(self, args) -> int:
        dataset = load_dataset(args.data)
        faces = self.corresponded_faces(dataset)
        entries = [validation.CvEntry(name, skull, true, deformed, group)
                   for name, group, skull, true, deformed
                   in zip(dataset.names, dataset.groups, dataset.skulls, dataset.faces, faces)]
        settings = self.config.crossval
        report = validation.loo_crossval(entries, settings.methods, settings.max_components,
                                         self.config.jobs, self.config.fit.orthogonality)
        validation.write_report(report, args.out, dataset.reference, settings.bin_width)
        self._record_config(args.out, is_directory=True)
        for name, summary in report.summaries.items():
            print(f"📉 {name}: optimum {summary.optimum} components, "
                  f"{summary.optimum_mean:.4f} ± {summary.optimum_std:.4f} mm")
        return 0

    def synth(self, args) -> int:
        spec = self.config.synth
        if args.spec:
            overrides = read_settings(args.spec)
            spec = SynthSpec.from_dict({**spec.to_dict(), **overrides, "seed": self.config.seed})
        dataset = generate(spec)
        write_dataset(dataset, args.out)
        self._record_config(args.out, is_directory=True)
        print(f"🧪 {len(dataset)} entries (p={spec.p}, q={spec.q}) -> {args.out}")
        return 0

    def report(self, args) -> int:
        print(validation.render_summary(args.report))
        if args.model and args.data:
            dataset = load_dataset(args.data)
            out = args.out or os.path.join(args.report, "distance_maps")
            kind = pca_model.read_archive(args.model)[0]
            model = pca_model.load_pca(args.model) if kind == "pca" else lrr.load_lrr(args.model)
            for name, skull, face in zip(dataset.names, dataset.skulls, dataset.faces):
                if kind == "pca":
                    prediction = pca_model.predict(model, skull, model.n_components)
                else:
                    prediction = lrr.predict(model, skull)
                predicted = prediction.to_mesh(dataset.reference.triangles)
                save_mesh(predicted, os.path.join(out, f"{name}.ply"),
                          vertex_quality=validation.distance_map(predicted, face))
            print(f"🗺️  {len(dataset)} distance maps -> {out}")
        return 0


# ============== argument parsing ==============

def build_parser() -> CliParser:
    common = CliParser(add_help=False)
    common.add_argument("--config", help="JSON settings file (defaults: pipeline_settings.json)")
    common.add_argument("--seed", type=int, help="seed for every random draw (default 0)")
    common.add_argument("--jobs", type=int, help="parallel workers (default 1)")
    common.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"],
                        help="log threshold (default INFO)")

    parser = CliParser(prog="cranioface", description="Skull-to-face statistical prediction")
    commands = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = commands.add_parser("split", parents=[common], help="cut a surface at its symmetry plane")
    p.add_argument("--mesh", required=True, help="whole surface mesh")
    p.add_argument("--landmarks", required=True, help="landmarks with midplane flags")
    p.add_argument("--side", choices=["right", "left", "both"], default="both", help="half to keep")
    p.add_argument("--out", required=True, help="directory for half meshes, templates and frames")

    p = commands.add_parser("densify", parents=[common], help="geodesic landmark densification")
    p.add_argument("--mesh", nargs="+", required=True, help="skull surface mesh(es)")
    p.add_argument("--landmarks", nargs="+", required=True, help="landmark template(s), one per mesh")
    p.add_argument("--iterations", type=int, help="midpoint generations")
    p.add_argument("--out", required=True, help="template JSON (directory for several meshes)")

    p = commands.add_parser("register", parents=[common], help="register the reference face")
    p.add_argument("--reference", required=True, help="reference face mesh")
    p.add_argument("--target", required=True, help="individual face mesh")
    p.add_argument("--out", required=True, help="deformed reference mesh")
    p.add_argument("--report", help="quality record JSON")
    p.add_argument("--distance-map", help="target mesh PLY with backward distances as quality")
    p.add_argument("--reference-landmarks", help="landmarks on the reference (guided start)")
    p.add_argument("--target-landmarks", help="landmarks on the target (guided start)")

    p = commands.add_parser("assemble", parents=[common], help="build the shape tables")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", required=True, help="table archive directory")

    p = commands.add_parser("fit", parents=[common], help="fit a face predictor")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--data", help="dataset directory")
    source.add_argument("--tables", help="table archive directory")
    p.add_argument("--reference", help="reference face mesh (topology stored with the model)")
    p.add_argument("--method", choices=["pca", "lrr"], help="predictor")
    p.add_argument("--components", type=int, help="component count")
    p.add_argument("--orthogonality", choices=["scores", "euclidean"], help="LRR latent vector metric")
    p.add_argument("--out", required=True, help="model archive (.npz)")

    p = commands.add_parser("predict", parents=[common], help="predict a face from a skull")
    p.add_argument("--model", required=True, help="model archive")
    p.add_argument("--skull", required=True, help="skull landmark JSON")
    p.add_argument("--components", type=int, help="use the first components only")
    p.add_argument("--reference", help="reference face mesh when the model has no topology")
    p.add_argument("--out", required=True, help="predicted face mesh (.ply or .obj)")

    p = commands.add_parser("crossval", parents=[common], help="leave-one-out cross-validation")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--methods", help="comma-separated predictors, e.g. pca,lrr")
    p.add_argument("--max-components", type=int, help="largest component count")
    p.add_argument("--bin-width", type=float, help="histogram bin width (mm)")
    p.add_argument("--out", required=True, help="report directory")

    p = commands.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    p.add_argument("--spec", help="JSON generator settings")
    p.add_argument("--out", required=True, help="dataset directory")

    p = commands.add_parser("report", parents=[common], help="render a cross-validation report")
    p.add_argument("--report", required=True, help="report directory")
    p.add_argument("--model", help="model archive for distance maps")
    p.add_argument("--data", help="dataset directory for distance maps")
    p.add_argument("--out", help="distance map directory (default REPORT/distance_maps)")
    return parser


def overrides_from(args) -> Dict:
    """Configuration overrides given as flags; absent flags stay None"""
    get = lambda name: getattr(args, name, None)
    methods = get("methods")
    return {
        "seed": args.seed,
        "jobs": args.jobs,
        "log_level": args.log_level,
        "densify": {"iterations": get("iterations")},
        "fit": {"method": get("method"), "components": get("components") if args.command == "fit" else None,
                "orthogonality": get("orthogonality")},
        "crossval": {"methods": methods.split(",") if methods else None,
                     "max_components": get("max_components"), "bin_width": get("bin_width")},
    }


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    try:
        config = load_config(args.config, overrides_from(args))
        setup_logging(config.log_level)
        log.debug("configuration", extra={"fields": {"command": args.command, "seed": config.seed}})
        return getattr(Pipeline(config), args.command)(args)
    except CranioError as e:
        return report_failure(e)
    except OSError as e:
        return report_failure(from_os_error(e))


def report_failure(error: CranioError) -> int:
    log.debug("command failed", extra={"fields": {"kind": error.kind}})
    print(json.dumps(error.to_record()), file=sys.stderr)
    return error.exit_code


if __name__ == "__main__":
    sys.exit(main())
