#!/usr/bin/env python3
"""Materialize MovieLens-100k and UCI Adult in their original text layouts.

Both datasets ship inside the `pytorch-widedeep` wheel as parquet files. This
script downloads the wheel (no dependencies, no install), reads the parquet
files with pandas and writes:

    data/ml-100k/u.data   user<TAB>item<TAB>rating<TAB>timestamp
    data/ml-100k/u.item   pipe-separated movie metadata (latin-1)
    data/adult/adult.data comma-separated census records, no header

Usage: python3 scripts/fetch_datasets.py [--out data]
"""
import argparse
import glob
import io
import os
import subprocess
import sys
import tempfile
import zipfile

import pandas as pd

WHEEL = "pytorch-widedeep==1.7.0"
PREFIX = "pytorch_widedeep/datasets/data/"
GENRES = [
    "unknown", "Action", "Adventure", "Animation", "Children's", "Comedy",
    "Crime", "Documentary", "Drama", "Fantasy", "Film-Noir", "Horror",
    "Musical", "Mystery", "Romance", "Sci-Fi", "Thriller", "War", "Western",
]
ADULT_COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "educational-num",
    "marital-status", "occupation", "relationship", "race", "gender",
    "capital-gain", "capital-loss", "hours-per-week", "native-country", "income",
]


def read(z, name):
    return pd.read_parquet(io.BytesIO(z.read(PREFIX + name)))


def cell(v):
    if v is None or (isinstance(v, float) and v != v):
        return ""
    return str(v)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="data")
    ap.add_argument("--wheel", help="use an already downloaded wheel")
    args = ap.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        wheel = args.wheel
        if wheel is None:
            subprocess.check_call(
                [sys.executable, "-m", "pip", "download", "--no-deps", "-q", "-d", tmp, WHEEL]
            )
            wheel = glob.glob(os.path.join(tmp, "*.whl"))[0]
        z = zipfile.ZipFile(wheel)

        ml = os.path.join(args.out, "ml-100k")
        os.makedirs(ml, exist_ok=True)
        ratings = read(z, "MovieLens100k_data.parquet.brotli")
        ratings[["user_id", "movie_id", "rating", "timestamp"]].to_csv(
            os.path.join(ml, "u.data"), sep="\t", header=False, index=False
        )
        items = read(z, "MovieLens100k_items.parquet.brotli").sort_values("movie_id")
        with open(os.path.join(ml, "u.item"), "w", encoding="latin-1") as f:
            for _, r in items.iterrows():
                fields = [
                    cell(r["movie_id"]), cell(r["movie_title"]), cell(r["release_date"]),
                    "", cell(r["IMDb_URL"]),
                ] + [cell(r[g]) for g in GENRES]
                f.write("|".join(fields) + "\n")

        ad = os.path.join(args.out, "adult")
        os.makedirs(ad, exist_ok=True)
        adult = read(z, "adult.parquet.brotli")[ADULT_COLUMNS]
        with open(os.path.join(ad, "adult.data"), "w") as f:
            for row in adult.itertuples(index=False):
                f.write(", ".join(cell(v) for v in row) + "\n")

    print("wrote %s and %s" % (ml, ad))


if __name__ == "__main__":
    main()
