"""
Streaming - Bounded, ordered hand-off of frames between a reader thread and the stages
"""
import queue
import threading
import time
from collections import deque
from concurrent.futures import Future, ThreadPoolExecutor
from typing import Callable, Deque, Generic, Iterable, Iterator, Optional, TypeVar

from ..config import Config
from ..log import get_logger

logger = get_logger("stream")

T = TypeVar("T")
R = TypeVar("R")

_DONE = object()


class _Failure:
    def __init__(self, error: BaseException):
        self.error = error


class BoundedFrameQueue(Generic[T]):
    """
    Reads a source on a producer thread into a bounded queue

    The producer blocks while the queue is full. With `fps`, items are released no
    faster than that rate to simulate live arrival. Errors raised by the source are
    re-raised in the consuming thread.
    """

    def __init__(self, source: Iterable[T], maxsize: Optional[int] = None, fps: Optional[float] = None):
        self.source = source
        self.maxsize = Config.queue_size(maxsize)
        self.fps = fps
        self._queue: "queue.Queue[object]" = queue.Queue(maxsize=self.maxsize)
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None

    def _produce(self) -> None:
        interval = 1.0 / self.fps if self.fps else 0.0
        start = time.monotonic()
        try:
            for n, item in enumerate(self.source):
                if interval:
                    delay = start + n * interval - time.monotonic()
                    if delay > 0:
                        time.sleep(delay)
                if not self._put(item):
                    return
            self._put(_DONE)
        except BaseException as e:  # noqa: BLE001
            self._put(_Failure(e))

    def _put(self, item: object) -> bool:
        while not self._stop.is_set():
            try:
                self._queue.put(item, timeout=0.1)
                return True
            except queue.Full:
                continue
        return False

    def __iter__(self) -> Iterator[T]:
        self._thread = threading.Thread(target=self._produce, name="frame-reader", daemon=True)
        self._thread.start()
        try:
            while True:
                item = self._queue.get()
                if item is _DONE:
                    return
                if isinstance(item, _Failure):
                    raise item.error
                yield item
        finally:
            self._stop.set()
            self._thread.join(timeout=5.0)


def process_ordered(items: Iterable[T], fn: Callable[[T], R], workers: int = 1,
                    window: Optional[int] = None) -> Iterator[R]:
    """
    Apply fn to every item, yielding results in input order

    With several workers at most `window` items are in flight; the oldest result is
    awaited before another item is submitted.
    """
    if workers <= 1:
        for item in items:
            yield fn(item)
        return

    window = Config.queue_size(window)
    pending: Deque[Future] = deque()
    with ThreadPoolExecutor(max_workers=workers, thread_name_prefix="frame-worker") as pool:
        for item in items:
            pending.append(pool.submit(fn, item))
            if len(pending) >= window:
                yield pending.popleft().result()
        while pending:
            yield pending.popleft().result()


def stream_frames(source: Iterable[T], fn: Callable[[T], R], workers: int = 1,
                  queue_size: Optional[int] = None, paced_fps: Optional[float] = None) -> Iterator[R]:
    """Reader thread -> bounded queue -> ordered (optionally parallel) processing"""
    frames = BoundedFrameQueue(source, queue_size, paced_fps)
    logger.debug("streaming with queue %d, %d worker(s), paced=%s", frames.maxsize, workers, paced_fps)
    yield from process_ordered(frames, fn, workers, queue_size)
