#!/usr/bin/env python3
# Copyright 2026 The xdistill Authors.
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     https://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Exports the four real benchmark datasets to the CSV layout xdistill reads.

Breast Cancer, Wine and Digits ship inside scikit-learn. California Housing
is fetched through scikit-learn when the network allows it; otherwise the
copy bundled in the pytorch-widedeep wheel is used (`pip download
--no-deps pytorch-widedeep` and pass the wheel with --widedeep-wheel).
"""

import argparse
import io
import os
import sys
import zipfile

import pandas as pd
from sklearn import datasets


def _frame(bunch, label):
    df = pd.DataFrame(bunch.data, columns=[str(c).replace(" ", "_") for c in bunch.feature_names])
    df[label] = bunch.target
    return df


def _california(wheel):
    try:
        return _frame(datasets.fetch_california_housing(), "MedHouseVal")
    except Exception as err:  # offline
        if not wheel:
            raise SystemExit(f"california_housing: fetch failed ({err}); pass --widedeep-wheel")
        with zipfile.ZipFile(wheel) as z:
            raw = z.read("pytorch_widedeep/datasets/data/california_housing.parquet.brotli")
        return pd.read_parquet(io.BytesIO(raw))


def main(argv):
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "data"))
    ap.add_argument("--widedeep-wheel", default=None)
    args = ap.parse_args(argv)
    os.makedirs(args.out, exist_ok=True)

    frames = {
        "breast_cancer": _frame(datasets.load_breast_cancer(), "target"),
        "wine": _frame(datasets.load_wine(), "target"),
        "digits": _frame(datasets.load_digits(), "target"),
        "california_housing": _california(args.widedeep_wheel),
    }
    for name, df in frames.items():
        path = os.path.join(args.out, f"{name}.csv")
        df.to_csv(path, index=False, float_format="%.10g")
        print(f"{name}: {df.shape[0]} rows x {df.shape[1] - 1} features -> {path}")


if __name__ == "__main__":
    main(sys.argv[1:])
