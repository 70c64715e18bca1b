"""Regenerates the three-sample bench fixture under crates/pipeline/tests/fixtures/bench.

Run from the repository root after `cargo build`:

    python3 scripts/make_bench_fixture.py
"""
import json
import subprocess
from pathlib import Path

from PIL import Image, ImageDraw

ROOT = Path("crates/pipeline/tests/fixtures/bench")
W, H = 64, 48
COLORS = {"red": (255, 0, 0), "blue": (0, 0, 255), "green": (0, 255, 0),
          "yellow": (255, 255, 0), "white": (255, 255, 255)}

# sample -> per-frame list of (colour, box)
SCENES = {
    "s1": [
        [("red", (4 + 6 * t, 28, 19 + 6 * t, 37)), ("blue", (44, 8, 49, 23))]
        for t in range(3)
    ],
    "s2": [
        [("green", (8, 4, 15, 19)), ("yellow", (36 + t, 36, 41 + t, 41)), ("white", (50, 20, 57, 25))]
        for t in range(3)
    ],
    "s3": [
        [("red", (2 + 10 * t, 30, 13 + 10 * t, 37)), ("blue", (48, 10 + t, 53, 25 + t))]
        for t in range(3)
    ],
}

SAMPLES = [
    ("s1", "Make the car golden.", 1, "semantic"),
    ("s2", "Remove the object closest to the camera.", 2, "spatial"),
    ("s3", "Recolour whatever travels the farthest during the clip.", 3, "temporal"),
]


def frames():
    for name, scene in SCENES.items():
        d = ROOT / "videos" / name
        d.mkdir(parents=True, exist_ok=True)
        names = []
        for t, shapes in enumerate(scene):
            img = Image.new("RGB", (W, H))
            draw = ImageDraw.Draw(img)
            for colour, box in shapes:
                draw.rectangle(box, fill=COLORS[colour])
            fname = f"{t:06d}.png"
            img.save(d / fname)
            names.append(fname)
        (d / "index.json").write_text(json.dumps({"frames": names}) + "\n")
        twin = subprocess.run(
            ["target/debug/river", "twin", "build", str(d), "--mock-perception", "--ignore-fixture",
             "--config", str(ROOT / "config.toml")],
            check=True, capture_output=True, text=True).stdout
        (d / "twin.json").write_text(twin)


def load_twin(name):
    return json.loads((ROOT / "videos" / name / "twin.json").read_text())


def script(name, query, turns):
    body = {"query": query, "turns": turns}
    (ROOT / "videos" / name / "reasoner.json").write_text(json.dumps(body, indent=2) + "\n")


def scripts():
    twin = load_twin("s1")
    for frame in twin["frames"]:
        for o in frame["instances"]:
            if o["category"] == "car":
                o["attributes"] = sorted(o["attributes"] + ["golden"])
    script("s1", SAMPLES[0][1], [
        "<think>The target is named directly: the car. Find its id, then add the golden attribute.</think>"
        "<execute>[id(o) for o in objects(frame=0) if category(o) == \"car\"]</execute>",
        f"<edit>{json.dumps(twin)}</edit>",
    ])

    twin = load_twin("s2")
    target = min(twin["frames"][0]["instances"], key=lambda o: o["spatial"]["depth"])["id"]
    for frame in twin["frames"]:
        frame["instances"] = [o for o in frame["instances"] if o["id"] != target]
    script("s2", SAMPLES[1][1], [
        "<think>Closest to the camera means smallest depth. Confirm it stays nearest, then remove it.</think>"
        "<execute>id(nearest(objects(frame=0)))</execute>",
        "<execute>category(nearest(objects(frame=2)))</execute>",
        f"<edit>{json.dumps(twin)}</edit>",
    ])

    script("s3", SAMPLES[2][1], [
        "<think>Compare the displacement of each object between the first and last frame and recolour the winner.</think>"
        "<execute>max_by(objects(frame=0), key=lambda o: displacement(id(o), 0, 2))</execute>",
        "<edit>{\"frames\": [{\"instances\": [{\"id\": 0, \"category\": \"car\"</edit>",
    ])


def manifest():
    lines = [json.dumps({"benchmark": "fixture"})]
    for name, query, level, category in SAMPLES:
        lines.append(json.dumps({"sample_id": name, "video_ref": f"videos/{name}", "query": query,
                                 "level": level, "category": category}))
    (ROOT / "manifest.jsonl").write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    frames()
    scripts()
    manifest()
