"""Adjacency lists for the four small-scale scientific workflows.

Each entry is ``(image, [indices of predecessor tasks])``; task ``i`` gets id
``t{i:02d}``. Index 0 is the virtual entry node and the last index is the
virtual exit node. These are structural stand-ins for the Pegasus gallery
drawings, not traced production DAGs.
"""
from __future__ import annotations


def _montage():
    tasks = [("virtual/entry", [])]
    tasks += [("montage/mProjectPP", [0]) for _ in range(4)]  # 1-4
    pairs = [(1, 2), (2, 3), (3, 4), (1, 3), (2, 4), (1, 4)]
    tasks += [("montage/mDiffFit", list(p)) for p in pairs]  # 5-10
    tasks.append(("montage/mConcatFit", list(range(5, 11))))  # 11
    tasks.append(("montage/mBgModel", [11]))  # 12
    tasks += [("montage/mBackground", [12, proj]) for proj in range(1, 5)]  # 13-16
    tasks.append(("montage/mImgtbl", [13, 14, 15, 16]))  # 17
    tasks.append(("montage/mAdd", [17, 13, 14, 15, 16]))  # 18
    tasks.append(("montage/mJPEG", [18]))  # 19
    tasks.append(("virtual/exit", [19]))  # 20
    return tasks


def _epigenomics():
    tasks = [("virtual/entry", []), ("epigenomics/fastQSplit", [0])]
    stages = ["filterContams", "sol2sanger", "fastq2bfq", "map"]
    lane_tails = []
    for _ in range(4):
        prev = 1
        for stage in stages:
            tasks.append((f"epigenomics/{stage}", [prev]))
            prev = len(tasks) - 1
        lane_tails.append(prev)
    tasks.append(("epigenomics/mapMerge", lane_tails))  # 18
    tasks.append(("virtual/exit", [18]))  # 19
    return tasks


def _cybershake():
    tasks = [("virtual/entry", [])]
    tasks += [("cybershake/ExtractSGT", [0]) for _ in range(2)]  # 1-2
    synth = []
    for sgt in (1, 2):
        for _ in range(4):
            tasks.append(("cybershake/SeismogramSynthesis", [sgt]))
            synth.append(len(tasks) - 1)  # 3-10
    peaks = []
    for s in synth:
        tasks.append(("cybershake/PeakValCalcOkaya", [s]))
        peaks.append(len(tasks) - 1)  # 11-18
    tasks.append(("cybershake/ZipSeis", synth))  # 19
    tasks.append(("cybershake/ZipPSA", peaks))  # 20
    tasks.append(("virtual/exit", [19, 20]))  # 21
    return tasks


def _ligo():
    tasks = [("virtual/entry", [])]
    joins = []
    for width in (5, 4):
        banks = []
        for _ in range(width):
            tasks.append(("ligo/TmpltBank", [0]))
            banks.append(len(tasks) - 1)
        inspirals = []
        for b in banks:
            tasks.append(("ligo/Inspiral", [b]))
            inspirals.append(len(tasks) - 1)
        tasks.append(("ligo/Thinca", inspirals))
        joins.append(len(tasks) - 1)
    tasks.append(("ligo/TrigBank", joins))  # 21
    tasks.append(("virtual/exit", [21]))  # 22
    return tasks


TOPOLOGIES = {
    "montage": _montage(),
    "epigenomics": _epigenomics(),
    "cybershake": _cybershake(),
    "ligo": _ligo(),
}

TASK_COUNTS = {"montage": 21, "epigenomics": 20, "cybershake": 22, "ligo": 23}
