import io

import pytest
from PIL import Image


@pytest.fixture
def png_bytes():
    """64x64 solid PNG."""
    buf = io.BytesIO()
    Image.new("RGB", (64, 64), (180, 40, 40)).save(buf, "PNG")
    return buf.getvalue()
