import pytest

from pm2lat_collector.kernels import parse_kernel_name, stable_algorithm_id
from pm2lat_collector.membound import NCU_METRICS, ncu_command, parse_ncu_csv


class TestKernelNameParser:
    def test_classic_sgemm_name(self):
        key = parse_kernel_name("ampere_sgemm_128x64_nn", "matmul", "fp32")
        assert (key["tile_m"], key["tile_n"]) == (128, 64)
        assert key["transpose_mode"] == "nn"
        assert key["library"] == "cublas"
        assert key["split_k"] == 1

    def test_tn_bf16_staged_name(self):
        key = parse_kernel_name(
            "ampere_bf16_s16816gemm_bf16_64x64_ldg8_f2f_stages_64x5_tn",
            "linear", "bf16")
        assert (key["tile_m"], key["tile_n"]) == (64, 64)
        assert key["transpose_mode"] == "tn"
        assert key["stages"] == 5

    def test_cutlass_name(self):
        key = parse_kernel_name("cutlass_80_simt_sgemm_256x128_8x4_nn_align1",
                                "matmul", "fp32")
        assert key["library"] == "cutlass"
        assert (key["tile_m"], key["tile_n"]) == (256, 128)

    def test_sliced_splitk(self):
        key = parse_kernel_name("volta_sgemm_64x32_sliced1x4_tn", "matmul", "fp32")
        assert key["split_k"] == 4
        assert key["reduction_scheme"] == 1

    def test_unparseable_returns_none(self):
        assert parse_kernel_name("elementwise_kernel", "matmul", "fp32") is None

    def test_algorithm_id_stable_and_distinct(self):
        a = stable_algorithm_id("ampere_sgemm_128x64_nn")
        assert a == stable_algorithm_id("ampere_sgemm_128x64_nn")
        assert a != stable_algorithm_id("ampere_sgemm_128x64_nt")
        assert 0 <= a < 2 ** 31


NCU_SAMPLE = """==PROF== Connected to process 1234
==PROF== Profiling "softmax_warp_forward" - 0: 0%....50%....100% - 1 pass
"ID","Process ID","Process Name","Host Name","Kernel Name","Context","Stream","Metric Name","Metric Unit","Metric Value"
"0","1234","python","127.0.0.1","softmax_warp_forward","1","7","dram__bytes_read.sum","byte","4,194,304"
"0","1234","python","127.0.0.1","softmax_warp_forward","1","7","dram__bytes_write.sum","byte","2,097,152"
"0","1234","python","127.0.0.1","softmax_warp_forward","1","7","dram__bytes.sum","byte","6,291,456"
"0","1234","python","127.0.0.1","softmax_warp_forward","1","7","smsp__sass_thread_inst_executed_op_ffma_pred_on.sum","inst","1,000"
"0","1234","python","127.0.0.1","softmax_warp_forward","1","7","smsp__sass_thread_inst_executed_op_fadd_pred_on.sum","inst","500"
"0","1234","python","127.0.0.1","softmax_warp_forward","1","7","smsp__sass_thread_inst_executed_op_fmul_pred_on.sum","inst","250"
"0","1234","python","127.0.0.1","softmax_warp_forward","1","7","smsp__sass_thread_inst_executed_op_integer_pred_on.sum","inst","111"
"1","1234","python","127.0.0.1","vectorized_elementwise_kernel","1","7","dram__bytes.sum","byte","128"
"""


class TestNcuCsvParser:
    def test_parses_and_sums_metrics(self):
        parsed = parse_ncu_csv(NCU_SAMPLE)
        softmax = parsed["softmax_warp_forward"]
        assert softmax["bytes_loaded"] == 4_194_304
        assert softmax["bytes_stored"] == 2_097_152
        assert softmax["total_bytes_accessed"] == 6_291_456
        assert softmax["flops"] == 2 * 1000 + 500 + 250   # fma counts twice
        assert softmax["int_ops"] == 111
        assert parsed["vectorized_elementwise_kernel"]["total_bytes_accessed"] == 128

    def test_empty_and_banner_only(self):
        assert parse_ncu_csv("") == {}
        assert parse_ncu_csv("==PROF== something\n==WARNING== x") == {}

    def test_command_includes_all_metrics(self):
        cmd = ncu_command(["python", "-c", "pass"])
        assert cmd[0] == "ncu"
        joined = " ".join(cmd)
        for metric in NCU_METRICS:
            assert metric in joined
