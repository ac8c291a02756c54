"""aichain: build, execute, debug and serve AI chains.

An AI chain composes prompt-driven workers (and traditional control flow)
into a program executed against pluggable model engines.  This package
provides the validated chain IR, structured prompts, the engine gateway,
the run/debug interpreter, design-time co-pilots, artifact stores, an HTTP
service with event streaming, and a CLI.
"""

__version__ = "0.1.0"
