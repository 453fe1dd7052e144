from editables.redirector import RedirectingFinder as F
F.install()
F.map_module('quantum_sieve', '/root/pkg/src/quantum_sieve/__init__.py')