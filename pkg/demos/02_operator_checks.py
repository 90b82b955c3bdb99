"""Run the built-in self-check suites and show what each one measures."""
from qnsch.verify import SUITES

for name, suite in SUITES.items():
    print(f"== {name}")
    for check in suite():
        print("  ", check.line())
