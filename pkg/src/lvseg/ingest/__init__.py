from .contours import rasterize_contour, read_contour_text, simplify_acdc_label
from .dicom import encode_dicom, parse_dicom, read_elements
from .nifti import encode_nifti, parse_nifti
from .study import load_study, stack_from_dicom_files, stack_from_nifti, store_study

__all__ = [
    "encode_dicom",
    "encode_nifti",
    "load_study",
    "parse_dicom",
    "parse_nifti",
    "rasterize_contour",
    "read_contour_text",
    "read_elements",
    "simplify_acdc_label",
    "stack_from_dicom_files",
    "stack_from_nifti",
    "store_study",
]
