import ipaddress
import socket
import time

import pytest

from ctleak.signing import LogSigner
from support import acceptance
from support.certgen import make_ca

SUITE_LIMIT_S = 600


@pytest.fixture(scope="session")
def ca():
    return make_ca("Fixture Trust")


@pytest.fixture(scope="session")
def signer():
    return LogSigner.generate()


# -- offline guard: every test talks to loopback fixtures only ---------------

_real_connect = socket.socket.connect
_real_sendto = socket.socket.sendto
_real_getaddrinfo = socket.getaddrinfo


def _loopback(host) -> bool:
    if host in ("localhost", ""):
        return True
    try:
        return ipaddress.ip_address(host).is_loopback
    except ValueError:
        return False


def _guard_addr(address):
    if isinstance(address, tuple) and not _loopback(address[0]):
        raise ConnectionRefusedError(f"test suite is offline: refusing {address[0]}")


def _connect(self, address):
    _guard_addr(address)
    return _real_connect(self, address)


def _sendto(self, data, *args):
    _guard_addr(args[-1])
    return _real_sendto(self, data, *args)


def _getaddrinfo(host, *args, **kwargs):
    if host is not None and not _loopback(host if isinstance(host, str) else host.decode()):
        raise socket.gaierror(f"test suite is offline: refusing to resolve {host}")
    return _real_getaddrinfo(host, *args, **kwargs)


def pytest_sessionstart(session):
    session.config._suite_t0 = time.monotonic()
    socket.socket.connect = _connect
    socket.socket.sendto = _sendto
    socket.getaddrinfo = _getaddrinfo


def pytest_sessionfinish(session, exitstatus):
    elapsed = time.monotonic() - session.config._suite_t0
    ok = elapsed < SUITE_LIMIT_S
    acceptance.RESULTS[8] = (
        "Full suite offline under 10 minutes", ok,
        f"{elapsed:.1f} s for {session.testscollected} tests, network guard active")
    if not ok and session.exitstatus == 0:
        session.exitstatus = 1
    socket.socket.connect = _real_connect
    socket.socket.sendto = _real_sendto
    socket.getaddrinfo = _real_getaddrinfo


def pytest_terminal_summary(terminalreporter):
    if not acceptance.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(acceptance.RESULTS):
        title, ok, detail = acceptance.RESULTS[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {title}  ({detail})")
