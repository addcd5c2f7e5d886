#!/usr/bin/env python3
"""Line-editing host that sandboxes itself with a seccomp filter.

Before the first read it installs a BPF filter that kills the process on
any entropy or socket syscall, the same class of self-protection that
pager-like tools use.  A shim that initializes its HTTP stack while
attached here dies; the lazy shim must survive a full session.

The filter is installed before the editor is even loaded, so everything
the shim does after attachment runs under it.  Exit code 3 means the
kernel refused the filter (tests should skip).
"""

import ctypes
import platform
import struct
import sys

PR_SET_NO_NEW_PRIVS = 38
PR_SET_SECCOMP = 22
SECCOMP_MODE_FILTER = 2

BPF_LD_W_ABS = 0x20
BPF_JEQ_K = 0x15
BPF_RET_K = 0x06
SECCOMP_RET_ALLOW = 0x7FFF0000
SECCOMP_RET_KILL = 0x00000000

ARCH_DATA = {
    # machine: (AUDIT_ARCH, {syscall: nr})
    "x86_64": (0xC000003E, {"getrandom": 318, "socket": 41, "connect": 42}),
    "aarch64": (0xC00000B7, {"getrandom": 278, "socket": 198, "connect": 203}),
}


def install_filter() -> bool:
    machine = platform.machine()
    if machine not in ARCH_DATA:
        return False
    audit_arch, forbidden = ARCH_DATA[machine]
    nrs = sorted(forbidden.values())

    def ins(code, jt, jf, k):
        return struct.pack("HBBI", code, jt, jf, k)

    prog = ins(BPF_LD_W_ABS, 0, 0, 4)                      # load arch
    prog += ins(BPF_JEQ_K, 0, len(nrs) + 1, audit_arch)    # foreign arch: allow
    prog += ins(BPF_LD_W_ABS, 0, 0, 0)                     # load syscall nr
    for i, nr in enumerate(nrs):
        prog += ins(BPF_JEQ_K, len(nrs) - i, 0, nr)        # match: jump to kill
    prog += ins(BPF_RET_K, 0, 0, SECCOMP_RET_ALLOW)
    prog += ins(BPF_RET_K, 0, 0, SECCOMP_RET_KILL)

    buf = ctypes.create_string_buffer(prog, len(prog))

    class SockFprog(ctypes.Structure):
        _fields_ = [("len", ctypes.c_ushort), ("filter", ctypes.c_void_p)]

    fprog = SockFprog(len(prog) // 8, ctypes.cast(buf, ctypes.c_void_p))
    libc = ctypes.CDLL(None, use_errno=True)
    if libc.prctl(PR_SET_NO_NEW_PRIVS, 1, 0, 0, 0) != 0:
        return False
    if libc.prctl(PR_SET_SECCOMP, SECCOMP_MODE_FILTER,
                  ctypes.byref(fprog), 0, 0) != 0:
        return False
    return True


def main():
    if not install_filter():
        print("seccomp filter unavailable", file=sys.stderr)
        return 3
    import readline  # noqa: F401  (loaded under the filter, like everything else)
    while True:
        try:
            line = input("> ")
        except EOFError:
            break
        print(f"echo: {line}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
