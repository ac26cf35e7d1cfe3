from pathlib import Path

import pytest

from ragveil.catalog import InvisibleCatalog, default_catalog
from ragveil.embedding import HashedTrigramEmbedder
from ragveil.harness import Query
from ragveil.retrieval import Corpus, Document
from ragveil.zones import PYTHON_LIKE

FIXTURES = Path(__file__).parent / "fixtures"

# Reference corpus: 12 small utility snippets, each the natural answer to
# one of the 10 fixture queries (plus two distractors).
SNIPPETS = [
    ("doc_argsort", "def argsort(seq):\n    return sorted(range(len(seq)), key=seq.__getitem__)\n"),
    ("doc_chunk", "def chunks(lst, n):\n    for i in range(0, len(lst), n):\n        yield lst[i:i + n]\n"),
    ("doc_csvread", "import csv\ndef read_rows(path):\n    with open(path) as fh:\n        return list(csv.reader(fh))\n"),
    ("doc_dedupe", "def dedupe(items):\n    seen = set()\n    return [x for x in items if not (x in seen or seen.add(x))]\n"),
    ("doc_fetch", "import requests\ndef fetch_json(url):\n    return requests.get(url, timeout=10).json()\n"),
    ("doc_flatten", "def flatten(nested):\n    return [x for sub in nested for x in sub]\n"),
    ("doc_hexdump", "def hexdump(data):\n    return ' '.join(f'{b:02x}' for b in data)\n"),
    ("doc_median", "def median(values):\n    s = sorted(values)\n    mid = len(s) // 2\n    return s[mid] if len(s) % 2 else (s[mid - 1] + s[mid]) / 2\n"),
    ("doc_retry", "import time\ndef retry(fn, attempts=3):\n    for i in range(attempts):\n        try:\n            return fn()\n        except Exception:\n            time.sleep(2 ** i)\n    raise RuntimeError('all attempts failed')\n"),
    ("doc_slugify", "import re\ndef slugify(title):\n    return re.sub(r'[^a-z0-9]+', '-', title.lower()).strip('-')\n"),
    ("doc_tempdir", "import tempfile, shutil\nclass TempDir:\n    def __enter__(self):\n        self.path = tempfile.mkdtemp()\n        return self.path\n    def __exit__(self, *exc):\n        shutil.rmtree(self.path)\n"),
    ("doc_walkdir", "import os\ndef list_files(root):\n    for base, _, names in os.walk(root):\n        for name in names:\n            yield os.path.join(base, name)\n"),
]

QUERY_TEXTS = [
    ("q01", "how to sort indexes of a list by value"),
    ("q02", "split a list into fixed size chunks"),
    ("q03", "read all rows from a csv file"),
    ("q04", "remove duplicates from a list keeping order"),
    ("q05", "download json from a url with requests"),
    ("q06", "flatten a nested list of lists"),
    ("q07", "print bytes as a hex dump"),
    ("q08", "compute the median of a list of numbers"),
    ("q09", "retry a function with exponential backoff"),
    ("q10", "walk a directory tree and list every file"),
]

TARGET_FILES = {
    "target_a": ("target_a.py", PYTHON_LIKE),
    "target_b": ("target_b.java", "java-like"),
    "target_c1": ("target_c1.py", PYTHON_LIKE),
    "target_c2": ("target_c2.py", PYTHON_LIKE),
    "target_c3": ("target_c3.py", PYTHON_LIKE),
    "target_c4": ("target_c4.py", PYTHON_LIKE),
}


@pytest.fixture(scope="session")
def catalog() -> InvisibleCatalog:
    return default_catalog()


@pytest.fixture(scope="session")
def small_catalog() -> InvisibleCatalog:
    return InvisibleCatalog(
        entries=(0x200B, 0x200C, 0x200D, 0x2060, 0x2062, 0x2063, 0x2064, 0xFEFF),
        source_tag="test-zero-width-8",
    )


@pytest.fixture()
def embedder() -> HashedTrigramEmbedder:
    return HashedTrigramEmbedder()


@pytest.fixture(scope="session")
def fixture_corpus() -> Corpus:
    return Corpus(
        [
            Document(id=doc_id, text=text, language=PYTHON_LIKE, label="safe")
            for doc_id, text in SNIPPETS
        ]
    )


@pytest.fixture(scope="session")
def fixture_queries() -> list[Query]:
    return [Query(id=qid, text=text) for qid, text in QUERY_TEXTS]


@pytest.fixture(scope="session")
def targets() -> dict[str, tuple[str, str]]:
    """tag -> (source text, language) for the payload fixtures."""
    out = {}
    for tag, (name, language) in TARGET_FILES.items():
        out[tag] = ((FIXTURES / "targets" / name).read_bytes().decode("utf-8"), language)
    return out


@pytest.fixture(scope="session")
def adversarial_target(targets) -> Document:
    text, language = targets["target_a"]
    return Document(id="adv_target", text=text, language=language, label="adversarial")
