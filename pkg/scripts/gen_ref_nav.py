"""Generate one API reference page per public module of `quantum_sieve`."""

from pathlib import Path

import mkdocs_gen_files

nav = mkdocs_gen_files.Nav()
mod_symbol = '<code class="doc-symbol doc-symbol-nav doc-symbol-module"></code>'

root = Path(__file__).parent.parent
package = root / "src" / "quantum_sieve"

for path in sorted(package.glob("*.py")):
    name = path.stem
    if name.startswith("_") and name != "__init__":
        continue
    ident = "quantum_sieve" if name == "__init__" else f"quantum_sieve.{name}"
    doc_path = Path("index.md" if name == "__init__" else f"{name}.md")
    full_doc_path = Path("reference", doc_path)
    nav[(f"{mod_symbol} {ident.rsplit('.', 1)[-1]}",)] = doc_path.as_posix()

    with mkdocs_gen_files.open(full_doc_path, "w") as fd:
        # dataclass fields read best in declaration order
        fd.write(f"::: {ident}\n    options:\n      members_order: source\n")

    mkdocs_gen_files.set_edit_path(full_doc_path, ".." / path.relative_to(root))

with mkdocs_gen_files.open("reference/SUMMARY.md", "w") as nav_file:
    nav_file.writelines(nav.build_literate_nav())
