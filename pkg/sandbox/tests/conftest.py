from __future__ import annotations

import base64
import io
import json

from render_sandbox.policy import DEFAULT_ALLOWLIST
from render_sandbox.server import handle_request_obj


def request(op: str, program: str, *, width=200, height=150, dpi=50,
            timeout_ms=20000, seed=7) -> dict:
    return {"op": op, "program": program,
            "figure": {"width_px": width, "height_px": height, "dpi": dpi},
            "timeout_ms": timeout_ms, "seed": seed}


def run(op: str, program: str, **kw) -> dict:
    return handle_request_obj(request(op, program, **kw), DEFAULT_ALLOWLIST)


def decode_png(frame: dict):
    from PIL import Image
    return Image.open(io.BytesIO(base64.b64decode(frame["image_png_b64"])))


# small corpus of well-behaved render programs
SAMPLE_PROGRAMS = [
    "import matplotlib.pyplot as plt\nplt.plot([1, 2, 3], [2, 1, 3])",
    "import matplotlib.pyplot as plt\nplt.bar(['a', 'b', 'c'], [3, 1, 2], color='#1F77B4')",
    ("import numpy as np\nimport matplotlib.pyplot as plt\n"
     "xs = np.random.rand(20)\nys = np.random.rand(20)\nplt.scatter(xs, ys)"),
    "import matplotlib.pyplot as plt\nplt.pie([4, 3, 2, 1])",
    ("data = {'columns': {'year': [1999, 2001, 2005], 'sales': [10, 20, 30]}}\n"
     "style = {'series_styles': {'sales': {'color': '#D62728'}}}\n"
     "import matplotlib.pyplot as plt\n"
     "plt.plot(data['columns']['year'], data['columns']['sales'],\n"
     "         color=style['series_styles']['sales']['color'])\n"
     "plt.title('sales')"),
]
