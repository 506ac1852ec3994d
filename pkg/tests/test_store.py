import threading

from cellsim.workload import StateStore


def test_single_threaded_increments():
    store = StateStore()
    store.put("k", 0)
    for _ in range(100):
        store.replace_with("k", lambda v: v + 1)
    assert store.get("k") == 100


def test_missing_key_returns_none_and_leaves_map_unchanged():
    store = StateStore()
    store.put("other", 1)
    assert store.replace_with("gone", lambda v: v + 1) is None
    assert store.items() == [("other", 1)]


def test_replace_with_returns_prior_value():
    store = StateStore()
    store.put("k", 10)
    assert store.replace_with("k", lambda v: v * 2) == 10
    assert store.get("k") == 20


def test_put_if_absent():
    store = StateStore()
    assert store.put_if_absent("k", 1) == 1
    assert store.put_if_absent("k", 2) == 1


def test_concurrent_increments_lose_no_updates():
    store = StateStore()
    store.put("counter", 0)
    n_threads, per_thread = 8, 500

    def worker():
        for _ in range(per_thread):
            store.replace_with("counter", lambda v: v + 1)

    threads = [threading.Thread(target=worker) for _ in range(n_threads)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert store.get("counter") == n_threads * per_thread


def test_concurrent_mixed_keys():
    store = StateStore()
    keys = [f"k{i}" for i in range(4)]
    for key in keys:
        store.put(key, 0)

    def worker(key):
        for _ in range(300):
            store.replace_with(key, lambda v: v + 1)

    threads = [threading.Thread(target=worker, args=(k,)) for k in keys for _ in range(3)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    for key in keys:
        assert store.get(key) == 900


def test_compare_and_replace_semantics():
    store = StateStore()
    store.put("k", "a")
    assert store.compare_and_replace("k", "a", "b") is True
    assert store.compare_and_replace("k", "a", "c") is False
    assert store.get("k") == "b"
