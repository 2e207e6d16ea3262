"""A small in-process actor runtime.

Every actor has one FIFO mailbox. Handlers are registered per message type as
*exclusive* or *concurrent*: concurrent handlers of one actor may overlap each
other, an exclusive handler never overlaps anything on the same actor.
Messages are dispatched strictly in mailbox order, so an exclusive message
waits for the concurrent handlers ahead of it and blocks the ones behind it.

Actors are multiplexed over a bounded thread pool. An actor with an empty
mailbox holds no task. Handlers never wait for messages; multi-party
exchanges are written as joins over replies kept in actor state.
"""

from __future__ import annotations

import itertools
import logging
import threading
from collections import deque
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable

from ..domain import MeterError
from . import codec
from .messages import Failure, Message, Shutdown

log = logging.getLogger(__name__)

EXCLUSIVE = "exclusive"
CONCURRENT = "concurrent"


class UnknownAddress(MeterError, LookupError):
    pass


class RuntimeStopped(MeterError, RuntimeError):
    pass


class UnhandledMessage(MeterError, TypeError):
    pass


@dataclass(frozen=True, order=True)
class Address:
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Envelope:
    message: Message
    sender: Address | None
    seq: int


def exclusive(*types: type) -> Callable:
    def mark(fn):
        fn._handles = [(t, EXCLUSIVE) for t in types]
        return fn
    return mark


def concurrent(*types: type) -> Callable:
    def mark(fn):
        fn._handles = [(t, CONCURRENT) for t in types]
        return fn
    return mark


class Actor:
    """Base class; subclasses mark handler methods with :func:`exclusive` or :func:`concurrent`.

    A handler is called as ``handler(message, sender)``. If it returns a
    message, that message is sent back to the sender. If it raises and the
    sender is known, the sender receives a :class:`Failure`.
    """

    _handlers: dict[type, tuple[str, str]] = {}

    def __init_subclass__(cls, **kw):
        super().__init_subclass__(**kw)
        handlers = {}
        for klass in reversed(cls.__mro__):
            for name, attr in vars(klass).items():
                for msg_type, mode in getattr(attr, "_handles", ()):
                    handlers[msg_type] = (name, mode)
        cls._handlers = handlers

    address: Address
    runtime: "Runtime"

    def send(self, to: Address, message: Message) -> None:
        self.runtime.send(to, message, sender=self.address)

    def handler_for(self, message: Message) -> tuple[Callable, str]:
        for klass in type(message).__mro__:
            if klass in self._handlers:
                name, mode = self._handlers[klass]
                return getattr(self, name), mode
        if isinstance(message, Shutdown):
            return self._default_shutdown, EXCLUSIVE
        raise UnhandledMessage(f"{type(self).__name__} has no handler for {type(message).__name__}")

    def _default_shutdown(self, message, sender):
        self.on_shutdown()

    def on_shutdown(self) -> None:
        pass


class _Cell:
    """Mailbox and scheduling state of one actor."""

    def __init__(self, runtime: "Runtime", actor: Actor):
        self.runtime = runtime
        self.actor = actor
        self.queue: deque[Envelope] = deque()
        self.lock = threading.Lock()
        self.running_exclusive = False
        self.running_concurrent = 0
        self.scheduled = 0
        self.delivered = 0

    def enqueue(self, env: Envelope):
        with self.lock:
            self.queue.append(env)
            rejected = self._pump()
        self._reject(rejected)

    def _reject(self, rejected):
        for env, exc in rejected:
            self.runtime._fail(env, exc)
            self.runtime._done()

    def _pump(self) -> list:
        # caller holds self.lock; failures are reported by the caller after release
        rejected = []
        while self.queue and not self.running_exclusive:
            env = self.queue[0]
            try:
                fn, mode = self.actor.handler_for(env.message)
            except UnhandledMessage as exc:
                self.queue.popleft()
                rejected.append((env, exc))
                continue
            if mode == EXCLUSIVE:
                if self.running_concurrent:
                    break
                self.running_exclusive = True
            else:
                self.running_concurrent += 1
            self.queue.popleft()
            self.scheduled += 1
            self.runtime._pool.submit(self._run, env, fn, mode)
        return rejected

    def _run(self, env: Envelope, fn: Callable, mode: str):
        try:
            result = fn(env.message, env.sender)
            if result is not None and env.sender is not None:
                self.runtime.send(env.sender, result, sender=self.actor.address)
        except Exception as exc:
            log.debug("handler %s failed on %s", self.actor.address, type(env.message).__name__, exc_info=True)
            self.runtime._fail(env, exc)
        finally:
            with self.lock:
                self.delivered += 1
                if mode == EXCLUSIVE:
                    self.running_exclusive = False
                else:
                    self.running_concurrent -= 1
                rejected = self._pump()
            self._reject(rejected)
            self.runtime._done()


class _Sink:
    """Reply endpoint of :meth:`Runtime.ask`: resolves a future, runs no handler."""

    def __init__(self, runtime: "Runtime", future: Future, address: Address):
        self.runtime = runtime
        self.future = future
        self.address = address

    def enqueue(self, env: Envelope):
        msg = env.message
        if not self.future.done():
            if isinstance(msg, Failure):
                self.future.set_exception(msg.error)
            else:
                self.future.set_result(msg)
        self.runtime._unregister(self.address)
        self.runtime._done()


class Runtime:
    """Hosts actors and delivers messages between them.

    Messages to or from an actor spawned with ``remote=True`` (or every
    message, with ``serialize=True``) are encoded to bytes and decoded on
    delivery, as they would be between machines.
    """

    def __init__(self, max_workers: int = 4, serialize: bool = False):
        self._pool = ThreadPoolExecutor(max_workers=max_workers, thread_name_prefix="actor")
        self._cells: dict[Address, Any] = {}
        self._lock = threading.Lock()
        self._idle = threading.Condition(self._lock)
        self._inflight = 0
        self._seq = itertools.count()
        self._names = itertools.count()
        self._stopped = False  # no new actors or asks
        self._closed = False  # pool gone; nothing can be delivered
        self.serialize = serialize
        self._remote: set[Address] = set()
        self.sent = 0
        self.encoded = 0

    # registration ------------------------------------------------------------------

    def spawn(self, actor: Actor, name: str | None = None, remote: bool = False) -> Address:
        address = Address(name or f"{type(actor).__name__.lower()}-{next(self._names)}")
        with self._lock:
            if self._stopped:
                raise RuntimeStopped("runtime is shut down")
            if address in self._cells:
                raise ValueError(f"address {address} already registered")
            actor.address = address
            actor.runtime = self
            self._cells[address] = _Cell(self, actor)
            if remote:
                self._remote.add(address)
        return address

    def actor(self, address: Address) -> Actor:
        return self._cells[address].actor

    def _unregister(self, address: Address):
        with self._lock:
            self._cells.pop(address, None)

    # messaging ---------------------------------------------------------------------

    def send(self, to: Address, message: Message, sender: Address | None = None) -> None:
        """Enqueue ``message`` for ``to``; never blocks on the receiver."""
        wire = self.serialize or to in self._remote or sender in self._remote
        if wire:
            message = codec.decode(codec.encode(message))
        with self._lock:
            self.encoded += wire
            if self._closed:
                raise RuntimeStopped("runtime is shut down")
            cell = self._cells.get(to)
            if cell is None:
                raise UnknownAddress(f"no actor at {to}")
            self._inflight += 1
            self.sent += 1
            env = Envelope(message, sender, next(self._seq))
        cell.enqueue(env)

    def ask(self, to: Address, message: Message) -> Future:
        """Send ``message`` and return a future for the single reply."""
        future: Future = Future()
        address = Address(f"_reply-{next(self._names)}")
        with self._lock:
            if self._stopped:
                raise RuntimeStopped("runtime is shutting down")
            self._cells[address] = _Sink(self, future, address)
        try:
            self.send(to, message, sender=address)
        except Exception:
            self._unregister(address)
            raise
        return future

    def _fail(self, env: Envelope, exc: Exception):
        if env.sender is None or isinstance(env.message, Failure):
            log.warning("unreported failure handling %s: %s", type(env.message).__name__, exc)
            return
        try:
            self.send(env.sender, Failure(exc, correlation_id=env.message.correlation_id))
        except (UnknownAddress, RuntimeStopped):
            log.warning("could not report failure to %s: %s", env.sender, exc)

    def _done(self):
        with self._lock:
            self._inflight -= 1
            if self._inflight == 0:
                self._idle.notify_all()

    # lifecycle -----------------------------------------------------------------------

    def pending(self) -> int:
        """Messages enqueued or running anywhere in the runtime."""
        with self._lock:
            return self._inflight

    def queued(self) -> int:
        with self._lock:
            cells = list(self._cells.values())
        return sum(len(c.queue) for c in cells if isinstance(c, _Cell))

    def wait_idle(self, timeout: float | None = None) -> bool:
        with self._idle:
            return self._idle.wait_for(lambda: self._inflight == 0, timeout)

    def stats(self, address: Address) -> dict:
        cell = self._cells[address]
        return {"scheduled": cell.scheduled, "delivered": cell.delivered, "queued": len(cell.queue)}

    def shutdown(self, timeout: float | None = 30.0) -> bool:
        """Send :class:`Shutdown` to every actor, drain, and stop the pool.

        Returns True when the runtime reached quiescence (no queued or running
        messages) before the timeout.
        """
        with self._lock:
            if self._stopped:
                return self._inflight == 0
            self._stopped = True
            targets = [a for a, c in self._cells.items() if isinstance(c, _Cell)]
        for address in targets:
            self.send(address, Shutdown())
        quiet = self.wait_idle(timeout)
        with self._lock:
            self._closed = True
        self._pool.shutdown(wait=quiet)
        return quiet

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.shutdown()
