"""A two-round Delphi study from set-up to reconciliation, via the CLI.

The facilitator creates a study, records rounds from CSV files, shares an
anonymised bundle between rounds, assigns groups from the rationales and
finalizes once nobody changes their answers.
"""
import json
import tempfile
from pathlib import Path

from expertrecon.workbench.cli import main

work = Path(tempfile.mkdtemp(prefix="delphi-demo-"))
study = str(work / "study")
rounds = work / "round.csv"
rounds.write_text(
    "expert_id,quantity_id,low,median,high,probability,rationale\r\n"
    "d1,inflow,120,180,260,,gauge record\r\n"
    "d2,inflow,100,170,240,,rating curve\r\n"
    "d3,inflow,130,190,300,,\"upstream storage, wet years\"\r\n"
    "d4,inflow,80,140,200,,seepage\r\n"
    "d5,inflow,90,150,230,,older fill\r\n"
    "d1,breach,,,,0.02,\r\nd2,breach,,,,0.03,\r\nd3,breach,,,,0.025,\r\n"
    "d4,breach,,,,0.08,\r\nd5,breach,,,,0.06,\r\n")
labels = work / "groups.csv"
labels.write_text("expert_id,group\r\nd1,hydrology\r\nd2,hydrology\r\nd3,hydrology\r\n"
                  "d4,geotech\r\nd5,geotech\r\n")


def run(*args):
    print("$ expertrecon", " ".join(args))
    code = main(list(args))
    print(f"  -> exit {code}")
    return code


run("delphi", "init", "--study", study, "--experts", "d1,d2,d3,d4,d5",
    "--quantity", "inflow", "--quantity", "breach:event")
run("delphi", "add-round", "--study", study, "--input", str(rounds))
run("delphi", "bundle", "--study", study, "--round", "1", "--output", str(work / "b1.json"))
print("  bundle pseudonyms:", sorted({e["expert"] for e in
                                       json.loads((work / "b1.json").read_text())["entries"]}))
run("delphi", "status", "--study", study)
run("delphi", "groups", "--study", study, "--labels", str(labels))
run("delphi", "finalize", "--study", study, "--seed", "1", "--out", str(work / "out"))
run("delphi", "add-round", "--study", study, "--input", str(rounds))
run("delphi", "status", "--study", study)
run("delphi", "finalize", "--study", study, "--seed", "1", "--out", str(work / "out"))

doc = json.loads((work / "out" / "reconciled.json").read_text())
inflow = doc["quantities"]["inflow"]["predictive"]
print(f"\ninflow: median {inflow['median']:.1f}, "
      f"90% interval [{inflow['lower']:.1f}, {inflow['upper']:.1f}]")
print(f"breach probability: {doc['quantities']['breach']['probability']:.4f}")
print("artifacts:", sorted(p.name for p in (work / "out").iterdir()))
