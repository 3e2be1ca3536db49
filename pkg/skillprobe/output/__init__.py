from skillprobe.output.exporters import PlotDataBundle, dumps_json, fmt_float, read_csv, read_json, write_csv, write_json

__all__ = ["PlotDataBundle", "dumps_json", "fmt_float", "read_csv", "read_json", "write_csv", "write_json"]
