"""Independent NIfTI-1 byte writer for the golden fixture (struct, field by field)."""
import struct


def golden_2x2x2() -> bytes:
    sz, sy, sx = 1.5, 1.01821005, 1.01821005
    hdr = b"".join(
        [
            struct.pack("<i", 348),
            b"\x00" * 10,  # data_type
            b"\x00" * 18,  # db_name
            struct.pack("<i", 0),  # extents
            struct.pack("<h", 0),  # session_error
            b"r",  # regular
            b"\x00",  # dim_info
            struct.pack("<8h", 3, 2, 2, 2, 1, 1, 1, 1),
            struct.pack("<3f", 0, 0, 0),  # intent_p1..3
            struct.pack("<h", 0),  # intent_code
            struct.pack("<h", 16),  # datatype float32
            struct.pack("<h", 32),  # bitpix
            struct.pack("<h", 0),  # slice_start
            struct.pack("<8f", 1.0, sx, sy, sz, 1, 1, 1, 1),
            struct.pack("<f", 352),  # vox_offset
            struct.pack("<f", 1.0),  # scl_slope
            struct.pack("<f", 0.0),  # scl_inter
            struct.pack("<h", 0),  # slice_end
            b"\x00",  # slice_code
            b"\x02",  # xyzt_units: mm
            struct.pack("<4f", 0, 0, 0, 0),  # cal_max, cal_min, slice_duration, toffset
            struct.pack("<2i", 0, 0),  # glmax, glmin
            b"\x00" * 80,  # descrip
            b"\x00" * 24,  # aux_file
            struct.pack("<2h", 0, 0),  # qform_code, sform_code
            struct.pack("<6f", 0, 0, 0, 0, 0, 0),  # quatern_bcd, qoffset_xyz
            struct.pack("<4f", sx, 0, 0, 0),
            struct.pack("<4f", 0, sy, 0, 0),
            struct.pack("<4f", 0, 0, sz, 0),
            b"\x00" * 16,  # intent_name
            b"n+1\x00",
        ]
    )
    assert len(hdr) == 348
    return hdr + b"\x00" * 4 + struct.pack("<8f", *range(8))
