import os


def worker_count(default: int | None = None) -> int:
    """Thread cap from ECHO_COLLAPSE_THREADS, else ``default`` or the CPU count."""
    env = os.environ.get("ECHO_COLLAPSE_THREADS", "").strip()
    if env:
        try:
            n = int(env)
        except ValueError:
            n = 0
        if n >= 1:
            return n
    return default or os.cpu_count() or 1
