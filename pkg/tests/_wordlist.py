"""A deterministic real-word corpus harvested from stdlib documentation.

The suite needs a few thousand genuine English words without shipping a
dictionary file or touching the network.  Rendering the bundled library
documentation and keeping the plausible word tokens gives a stable,
reproducible list of well over five thousand entries.
"""

import contextlib
import importlib
import io
import pydoc
import re

_MODULES = [
    "argparse", "array", "ast", "asyncio", "base64", "bisect", "calendar",
    "cmd", "codecs", "collections", "configparser", "contextlib", "copy",
    "csv", "ctypes", "datetime", "decimal", "difflib", "dis", "doctest",
    "email", "enum", "fileinput", "fnmatch", "fractions", "functools",
    "getopt", "gettext", "glob", "gzip", "hashlib", "heapq", "hmac", "html",
    "http", "imaplib", "inspect", "ipaddress", "itertools", "json", "locale",
    "logging", "lzma", "mailbox", "math", "mimetypes", "multiprocessing",
    "netrc", "numbers", "operator", "os", "pathlib", "pdb", "pickle",
    "pkgutil", "platform", "plistlib", "poplib", "pprint", "profile",
    "queue", "random", "re", "reprlib", "sched", "secrets", "select",
    "shelve", "shlex", "shutil", "signal", "smtplib", "socket", "sqlite3",
    "ssl", "statistics", "string", "struct", "subprocess", "symtable",
    "tarfile", "tempfile", "textwrap", "threading", "time", "timeit",
    "token", "tokenize", "traceback", "types", "typing", "unicodedata",
    "unittest", "urllib", "uuid", "warnings", "wave", "weakref", "webbrowser",
    "xml", "zipfile", "zlib",
]

_cache = None


def english_words(limit=5000):
    """Sorted list of distinct lowercase words, truncated to `limit`."""
    global _cache
    if _cache is None:
        words = set()
        for name in _MODULES:
            try:
                mod = importlib.import_module(name)
                with contextlib.redirect_stdout(io.StringIO()):
                    text = pydoc.render_doc(mod)
            except Exception:
                continue
            for tok in re.findall(r"[A-Za-z]+", text):
                w = tok.lower()
                if not 2 <= len(w) <= 14:
                    continue
                if not re.search(r"[aeiouy]", w):
                    continue
                if re.search(r"(.)\1\1", w):
                    continue
                words.add(w)
        _cache = sorted(words)
    return _cache[:limit]
