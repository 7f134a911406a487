import os
import sys

path = os.path.dirname(os.path.abspath(__file__))

# every agent class of the package becomes importable as agents.<ClassName>
AGENTS = {}
for py in sorted(f[:-3] for f in os.listdir(path) if f.endswith('.py') and f != '__init__.py'):
    mod = __import__('.'.join([__name__, py]), fromlist=[py])
    for name in dir(mod):
        cls = getattr(mod, name)
        if isinstance(cls, type) and name.endswith('Agent') and cls.__module__ == mod.__name__:
            AGENTS[name] = cls
            setattr(sys.modules[__name__], name, cls)

__all__ = sorted(AGENTS)
