"""chartsmith: de-render chart images into editable bundles, apply
natural-language edits through typed steps, and score the results."""

__version__ = "0.1.0"

from .bundle import ChartBundle, EditRequest, load_bundle, save_bundle  # noqa: E402,F401
from .derender import DerenderConfig, derender  # noqa: E402,F401
from .editing import EditedResult, edit, replot  # noqa: E402,F401
from .errors import ChartsmithError  # noqa: E402,F401
from .gateway import Gateway, ReplayProvider, ScriptedProvider  # noqa: E402,F401
from .images import ChartImage, load_png, save_png  # noqa: E402,F401
from .table import DataTable  # noqa: E402,F401
