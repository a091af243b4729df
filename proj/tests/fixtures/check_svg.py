"""Parses every SVG fixture with the standard XML parser."""
import pathlib
import sys
import xml.etree.ElementTree as ET

NS = "{http://www.w3.org/2000/svg}"
files = sorted(pathlib.Path(sys.argv[1]).glob("*.svg"))
if not files:
    sys.exit("no svg files")
for f in files:
    root = ET.parse(f).getroot()
    assert root.tag == NS + "svg", f
    assert root.get("viewBox"), f
    print(f"ok {f.name}: {sum(1 for _ in root.iter())} elements")
