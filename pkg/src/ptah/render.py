"""Headless-browser rendering of the final HTML and viewport capture.

The browser command is a template with ``{html}``, ``{out}``, ``{width}``,
``{height}`` placeholders. The captured PNG is normalized to exactly the
requested viewport (over-sized captures are cropped top-left; under-sized
ones are an error).
"""

from __future__ import annotations

import shlex
import shutil
import subprocess
from pathlib import Path
from typing import Optional

from .errors import ConfigError, RenderError

VIEWPORT = (1000, 2000)

_BROWSER_BINARIES = ("chromium", "chromium-browser", "google-chrome",
                     "google-chrome-stable", "chrome", "headless-shell")

DEFAULT_BROWSER_ARGS = (
    "--headless=new --disable-gpu --hide-scrollbars --force-device-scale-factor=1 "
    "--window-size={width},{height} --screenshot={out} {html}"
)


def find_browser() -> Optional[str]:
    for name in _BROWSER_BINARIES:
        path = shutil.which(name)
        if path:
            return path
    return None


def default_browser_cmd() -> Optional[str]:
    browser = find_browser()
    if browser is None:
        return None
    return f"{browser} {DEFAULT_BROWSER_ARGS}"


def render(html_path, out_dir, browser_cmd: str = "",
           width: int = VIEWPORT[0], height: int = VIEWPORT[1],
           screenshot: bool = True, timeout_s: float = 120.0) -> dict:
    """Capture the top width x height viewport of the rendered page.

    Returns {"html_path": ..., "viewport_png_path": ... or None}. With
    ``screenshot=False`` only the HTML path is reported and no browser is
    needed.
    """
    html_path = Path(html_path)
    out_dir = Path(out_dir)
    if not html_path.exists():
        raise RenderError(f"html file missing: {html_path}")
    if not screenshot:
        return {"html_path": str(html_path), "viewport_png_path": None}

    cmd = browser_cmd or default_browser_cmd()
    if not cmd:
        raise ConfigError("no headless browser configured or discoverable; "
                          "set render.browser_cmd or pass --no-screenshot")
    png_path = out_dir / "viewport.png"
    formatted = cmd.format(html=str(html_path.resolve()), out=str(png_path),
                           width=width, height=height)
    argv = shlex.split(formatted)
    try:
        proc = subprocess.run(argv, capture_output=True, text=True, timeout=timeout_s)
    except FileNotFoundError as exc:
        raise ConfigError(f"browser binary not found: {argv[0]}") from exc
    except subprocess.TimeoutExpired as exc:
        raise RenderError(f"browser did not finish within {timeout_s}s") from exc
    if proc.returncode != 0:
        raise RenderError(
            f"browser exited {proc.returncode}: {proc.stderr[-1000:] or proc.stdout[-1000:]}")
    if not png_path.exists():
        raise RenderError("browser reported success but wrote no screenshot")

    from PIL import Image

    with Image.open(png_path) as img:
        if img.size != (width, height):
            if img.width >= width and img.height >= height:
                img.crop((0, 0, width, height)).save(png_path, format="PNG")
            else:
                raise RenderError(
                    f"screenshot is {img.width}x{img.height}, smaller than the "
                    f"required {width}x{height} viewport")
    return {"html_path": str(html_path), "viewport_png_path": str(png_path)}
