import csv
import os

from errors import OutputError


def write_rows(headers, rows, path):
    """Write dict rows under a header line. Keys missing from a row are left empty.

    Returns the number of data rows written.
    """
    count = 0
    try:
        folder = os.path.dirname(os.path.abspath(path))
        os.makedirs(folder, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=list(headers), extrasaction="ignore")
            writer.writeheader()
            for row in rows:
                writer.writerow(row)
                count += 1
    except OSError as e:
        raise OutputError(path, e) from e
    return count


def write_csv(series, path):
    """Write a FunctionalSeries (step, t, then one column per functional)."""
    return write_rows(series.headers, series.rows(), path)


def write_study(study, folder, stem):
    """Per-mesh error table and fitted rates of a convergence study."""
    errors_path = os.path.join(folder, f"{stem}_errors.csv")
    rates_path = os.path.join(folder, f"{stem}_rates.csv")
    write_rows(study.headers(), study.rows, errors_path)
    write_rows(["case", "order", "boundary", "quantity", "norm", "rate"], study.rate_rows(), rates_path)
    return errors_path, rates_path


def write_scan(scan, folder, stem):
    """det(Z) grid values, the zero-contour polylines and the candidate roots of one scan."""
    paths = {
        "values": os.path.join(folder, f"{stem}_values.csv"),
        "contours": os.path.join(folder, f"{stem}_contours.csv"),
        "roots": os.path.join(folder, f"{stem}_roots.csv"),
    }
    write_rows(["re_s", "im_s", "re_det", "im_det"], scan.rows(), paths["values"])
    write_rows(["curve_id", "part", "re_s", "im_s"], scan.contour_rows(), paths["contours"])
    write_rows(["re_s", "im_s"], ({"re_s": x, "im_s": y} for x, y in scan.intersections), paths["roots"])
    return paths
