"""End-to-end check of `conlink link --server` against a live service."""

import threading
import time

import pytest
import uvicorn

from conlink.cli import main
from conlink.encoder import NGramEncoder
from conlink.index import build_index
from conlink.metric import DistanceKind
from conlink.service import ServingBundle, create_app
from conlink.terminology import ConceptName, Terminology


@pytest.fixture(scope="module")
def live_server():
    names = [
        ConceptName("ibuprofen", "DB01050"),
        ConceptName("aspirin", "DB00945"),
        ConceptName("capecitabine", "DB01101"),
    ]
    t = Terminology(names, {})
    enc = NGramEncoder.create(dim=16, buckets=1 << 12, seed=8)
    bundle = ServingBundle(encoder=enc, index=build_index(t, enc, DistanceKind.EUCLIDEAN))
    app = create_app(bundle)

    server = uvicorn.Server(
        uvicorn.Config(app, host="127.0.0.1", port=0, log_level="warning")
    )
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.time() + 10
    while not server.started:
        if time.time() > deadline:
            raise RuntimeError("server did not start")
        time.sleep(0.02)
    port = server.servers[0].sockets[0].getsockname()[1]
    yield f"http://127.0.0.1:{port}"
    server.should_exit = True
    thread.join(timeout=5)


class TestThinClient:
    def test_link_via_server(self, live_server, capsys):
        code = main(["link", "--server", live_server, "--text", "Ibuprofen 600 mg", "--k", "2"])
        assert code == 0
        out = capsys.readouterr().out
        lines = [l.split("\t") for l in out.strip().splitlines()]
        assert lines[0][0] == "Ibuprofen 600 mg"
        assert lines[0][2] == "1"
        assert lines[0][3] == "DB01050"
        assert len(lines) == 2

    def test_server_mode_requires_text(self, live_server):
        assert main(["link", "--server", live_server, "--mentions", "x.tsv"]) == 1
