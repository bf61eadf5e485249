"""covertcast: pull-broadcast anonymous routing over social upload behaviour.

A library and day-granularity simulator for routing short messages through a
social graph by piggybacking on each member's organic upload schedule, plus a
universal re-encryption message layer that keeps forwarded ciphertexts
bitwise unlinkable across hops.
"""

__version__ = "0.1.0"
