import threading

import pytest

from sdxl_backend.config import BackendConfig
from sdxl_backend.server import make_server


@pytest.fixture
def tiny_server():
    """A live tiny-mode service on an ephemeral port."""
    server = make_server(BackendConfig(mode="tiny", max_concurrent=1))
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    host, port = server.server_address
    yield f"http://{host}:{port}"
    server.shutdown()
    server.server_close()
    thread.join(timeout=5)
