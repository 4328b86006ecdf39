"""
The annotation service over real HTTP
=====================================

Spawns the bundled server as a subprocess, then plays a short annotation
session against it with nothing but the standard library: create a
session over a synthetic dataset, poll the offered probe (twice, to show
the offer is stable), page through the ranking, submit matches and one
no-match, and read the progress counters. Snapshot files land in a
temporary directory so the trained model can be inspected afterwards.
"""

import json
import socket
import subprocess
import sys
import tempfile
import time
import urllib.request

from her_reid import load_model


def call(method, url, body=None):
    data = None if body is None else json.dumps(body).encode()
    req = urllib.request.Request(url, data=data, method=method)
    req.add_header("content-type", "application/json")
    with urllib.request.urlopen(req) as resp:
        return json.loads(resp.read())


# grab a free port, then hand it to the server subprocess
with socket.socket() as s:
    s.bind(("127.0.0.1", 0))
    port = s.getsockname()[1]
base = f"http://127.0.0.1:{port}"

server = subprocess.Popen(
    [sys.executable, "-m", "her_reid.cli", "serve", "--listen", f"127.0.0.1:{port}"],
    stdout=subprocess.DEVNULL,
    stderr=subprocess.DEVNULL,
)
try:
    for _ in range(100):
        try:
            call("GET", base + "/healthz")
            break
        except OSError:
            time.sleep(0.1)
    else:
        raise RuntimeError("server did not come up")
    print("server live at", base)

    snapdir = tempfile.mkdtemp(prefix="annotation-demo-")
    created = call("POST", base + "/sessions", {
        "dataset": {"kind": "synthetic",
                    "spec": {"identities": 20, "dim": 8, "noise": 0.3, "seed": 3}},
        "policy": "joint-e2",
        "lambda": 0.5,
        "budget_fraction": 0.5,
        "seed": 1,
        "snapshot_dir": snapdir,
    })
    sid = created["session_id"]
    print("session %s: %d probes, budget %d"
          % (sid[:8], created["probe_count"], created["budget"]))

    sessions = base + "/sessions/" + sid

    # the offer is idempotent: polling again returns the same probe
    first = call("GET", sessions + "/next-probe")
    again = call("GET", sessions + "/next-probe")
    assert first["probe_id"] == again["probe_id"]
    print("offered probe %d, %d candidates (showing %d)"
          % (first["probe_id"], first["total_candidates"], first["returned"]))

    # pagination: second page of three
    page2 = call("GET", sessions + "/next-probe?offset=3&limit=3")
    print("ranks on page 2:", [c["rank"] for c in page2["ranking"]])

    # play the annotator: confirm the top candidate, except park every
    # fourth probe as "no match in the gallery"
    for round_no in range(8):
        offer = call("GET", sessions + "/next-probe")
        if round_no % 4 == 3:
            body = {"probe_id": offer["probe_id"], "no_match": True}
        else:
            body = {"probe_id": offer["probe_id"],
                    "gallery_id": offer["ranking"][0]["gallery_id"]}
        reply = call("POST", sessions + "/labels", body)
        tag = ("new identity %s" % reply["identity"]) if reply["matched"] else "parked"
        print("  round %d: probe %2d -> %s" % (round_no + 1, reply["probe_id"], tag))

    m = call("GET", sessions + "/metrics")
    print("progress: %d labeled, %d parked, %d classes, %d/%d budget used"
          % (m["labeled"], m["parked"], m["classes"], m["selections"], m["budget"]))

    snapshot = load_model(f"{snapdir}/{sid}.herm")
    print("snapshot on disk knows %d classes (lam=%.2f)"
          % (snapshot.class_count, snapshot.lam))
finally:
    server.terminate()
    server.wait(timeout=10)
print("server stopped")
