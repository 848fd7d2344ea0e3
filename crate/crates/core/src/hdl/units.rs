//! Verilog text for each hardware unit.
//!
//! Streams use a ready/valid handshake; a word moves when both are high.

use crate::error::{Error, Result};

/// Substitute `${KEY}` placeholders.
fn fill(template: &str, vars: &[(&str, String)]) -> String {
    let mut text = template.to_string();
    for (key, value) in vars {
        text = text.replace(&format!("${{{key}}}"), value);
    }
    debug_assert!(!text.contains("${"), "unfilled placeholder in template");
    text
}

const CONV_UNIT: &str = r#"// Window-by-filter dot product on LANES parallel multipliers, added to a
// seed accumulator. One window takes N_STATES cycles.
module ${NAME} #(
    parameter W = ${W},
    parameter ACC_W = ${ACC_W},
    parameter K = ${K}
) (
    input  wire             clk,
    input  wire             rst,
    input  wire [K*K*W-1:0] win_data,
    input  wire             win_valid,
    output wire             win_ready,
    input  wire [K*K*W-1:0] filt_data,
    input  wire             filt_valid,
    output wire             filt_ready,
    input  wire [ACC_W-1:0] acc_seed,
    output reg  [ACC_W-1:0] row_data,
    output reg              row_valid,
    input  wire             row_ready
);
    localparam TAPS = K * K;
    localparam N_STATES = ${N_STATES};

    reg                     busy;
    reg  [31:0]             state;
    reg  signed [ACC_W-1:0] acc;
    reg  [K*K*W-1:0]        win_q;
    reg  [K*K*W-1:0]        filt_q;
    wire signed [ACC_W-1:0] step_sum;

    assign win_ready  = !busy && !row_valid;
    assign filt_ready = win_ready;

    generate
        localparam LANES = ${LANES};
        wire signed [ACC_W-1:0] partial [0:LANES];
        assign partial[0] = {ACC_W{1'b0}};
        genvar lane;
        for (lane = 0; lane < LANES; lane = lane + 1) begin : mac_lane
            wire [31:0] tap = state * LANES + lane;
            wire signed [W-1:0] a = (tap < TAPS) ? win_q[tap*W +: W] : {W{1'b0}};
            wire signed [W-1:0] b = (tap < TAPS) ? filt_q[tap*W +: W] : {W{1'b0}};
            wire signed [2*W-1:0] prod = a * b;
            assign partial[lane + 1] = partial[lane] + {{(ACC_W-2*W){prod[2*W-1]}}, prod};
        end
        assign step_sum = partial[LANES];
    endgenerate

    always @(posedge clk) begin
        if (rst) begin
            busy      <= 1'b0;
            state     <= 32'd0;
            acc       <= {ACC_W{1'b0}};
            row_data  <= {ACC_W{1'b0}};
            row_valid <= 1'b0;
        end else begin
            if (row_valid && row_ready)
                row_valid <= 1'b0;
            if (win_ready && win_valid && filt_valid) begin
                win_q  <= win_data;
                filt_q <= filt_data;
                acc    <= acc_seed;
                state  <= 32'd0;
                busy   <= 1'b1;
            end else if (busy) begin
                acc   <= acc + step_sum;
                state <= state + 32'd1;
                if (state == N_STATES - 1) begin
                    busy      <= 1'b0;
                    row_data  <= acc + step_sum;
                    row_valid <= 1'b1;
                end
            end
        end
    end
endmodule
"#;

/// Convolution unit with `lanes` DSP multipliers.
pub fn conv_unit(name: &str, lanes: usize, width: u32, acc_bits: u32, kernel: usize) -> Result<String> {
    if lanes == 0 {
        return Err(Error::invalid("conv unit needs at least one DSP lane"));
    }
    Ok(fill(
        CONV_UNIT,
        &[
            ("NAME", name.to_string()),
            ("W", width.to_string()),
            ("ACC_W", acc_bits.to_string()),
            ("K", kernel.to_string()),
            ("N_STATES", (kernel * kernel).div_ceil(lanes).to_string()),
            ("LANES", lanes.to_string()),
        ],
    ))
}

const FEEDFORWARD: &str = r#"// Feedforward unit for layer ${IDX}: buffers the ${IN_H}x${IN_W}x${IN_C} input fmap,
// then issues one KxK window and filter per (out channel, row, col, in channel).
module ff_l${IDX} #(
    parameter W = ${W},
    parameter ACC_W = ${ACC_W},
    parameter K = ${K}
) (
    input  wire             clk,
    input  wire             rst,
    input  wire [W-1:0]     in_data,
    input  wire             in_valid,
    output wire             in_ready,
    output wire             req,
    input  wire             grant,
    output wire [K*K*W-1:0] win_data,
    output wire             win_valid,
    input  wire             win_ready,
    output wire [K*K*W-1:0] filt_data,
    output wire             filt_valid,
    input  wire             filt_ready,
    output wire [ACC_W-1:0] acc_seed,
    input  wire [ACC_W-1:0] row_data,
    input  wire             row_valid,
    output wire             row_ready,
    output reg  [ACC_W-1:0] out_data,
    output reg              out_valid,
    input  wire             out_ready
);
    localparam IN_H = ${IN_H};
    localparam IN_W = ${IN_W};
    localparam IN_C = ${IN_C};
    localparam OUT_C = ${OUT_C};
    localparam TAPS = K * K;
    localparam PAD = K / 2;
    localparam RAM_DEPTH = ${RAM_DEPTH};
    localparam ROM_DEPTH = ${ROM_DEPTH};
    localparam WEIGHT_WORDS = ${WEIGHT_WORDS};
    localparam BIAS_SHIFT = ${BIAS_SHIFT};

    reg [W-1:0] ram [0:RAM_DEPTH-1];
    reg [W-1:0] rom [0:ROM_DEPTH-1];
    initial $readmemh("${MEMFILE}", rom);

    localparam S_FILL = 2'd0, S_ISSUE = 2'd1, S_WAIT = 2'd2, S_EMIT = 2'd3;
    reg [1:0] sm;
    integer wr_addr;
    integer oc, row, col, ic;
    reg signed [ACC_W-1:0] partial;

${BIAS}
    assign in_ready   = (sm == S_FILL);
    assign req        = (sm == S_ISSUE) || (sm == S_WAIT);
    assign win_valid  = (sm == S_ISSUE) && grant;
    assign filt_valid = win_valid;
    assign row_ready  = (sm == S_WAIT) && grant;
    assign acc_seed   = (ic == 0) ? bias_acc : partial;

    genvar t;
    generate
        for (t = 0; t < TAPS; t = t + 1) begin : window_tap
            wire signed [31:0] r = row + t / K - PAD;
            wire signed [31:0] c = col + t % K - PAD;
            wire inside = (r >= 0) && (r < IN_H) && (c >= 0) && (c < IN_W);
            assign win_data[t*W +: W]  = inside ? ram[(ic * IN_H + r) * IN_W + c] : {W{1'b0}};
            assign filt_data[t*W +: W] = rom[(oc * IN_C + ic) * TAPS + t];
        end
    endgenerate

    always @(posedge clk) begin
        if (rst) begin
            sm        <= S_FILL;
            wr_addr   <= 0;
            oc        <= 0;
            row       <= 0;
            col       <= 0;
            ic        <= 0;
            partial   <= {ACC_W{1'b0}};
            out_data  <= {ACC_W{1'b0}};
            out_valid <= 1'b0;
        end else begin
            case (sm)
                S_FILL: if (in_valid) begin
                    ram[wr_addr] <= in_data;
                    if (wr_addr == RAM_DEPTH - 1) begin
                        wr_addr <= 0;
                        sm      <= S_ISSUE;
                    end else begin
                        wr_addr <= wr_addr + 1;
                    end
                end
                S_ISSUE: if (grant && win_ready && filt_ready)
                    sm <= S_WAIT;
                S_WAIT: if (grant && row_valid) begin
                    if (ic == IN_C - 1) begin
                        ic        <= 0;
                        out_data  <= row_data;
                        out_valid <= 1'b1;
                        sm        <= S_EMIT;
                    end else begin
                        ic      <= ic + 1;
                        partial <= row_data;
                        sm      <= S_ISSUE;
                    end
                end
                S_EMIT: if (out_ready) begin
                    out_valid <= 1'b0;
                    sm        <= S_ISSUE;
                    if (col == IN_W - 1) begin
                        col <= 0;
                        if (row == IN_H - 1) begin
                            row <= 0;
                            if (oc == OUT_C - 1) begin
                                oc <= 0;
                                sm <= S_FILL;
                            end else begin
                                oc <= oc + 1;
                            end
                        end else begin
                            row <= row + 1;
                        end
                    end else begin
                        col <= col + 1;
                    end
                end
            endcase
        end
    end
endmodule
"#;

/// Bias lookup shared by the feedforward and dense templates. `index` names
/// the output channel or unit counter.
fn bias_block(has_bias: bool, index: &str) -> String {
    if has_bias {
        format!(
            "    wire signed [W-1:0] bias_word = rom[WEIGHT_WORDS + {index}];\n    wire signed [ACC_W-1:0] bias_acc = {{{{(ACC_W-W){{bias_word[W-1]}}}}, bias_word}} <<< BIAS_SHIFT;\n"
        )
    } else {
        "    wire signed [ACC_W-1:0] bias_acc = {ACC_W{1'b0}};\n".to_string()
    }
}

/// Geometry and ROM layout of one conv or dense layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerRom {
    pub index: usize,
    pub memfile: String,
    pub weight_words: usize,
    pub bias_words: usize,
    /// `F_acc - F_bias`; zero without a bias.
    pub bias_shift: u32,
}

impl LayerRom {
    pub fn depth(&self) -> usize {
        self.weight_words + self.bias_words
    }
}

#[allow(clippy::too_many_arguments)]
pub fn feedforward(
    rom: &LayerRom,
    in_h: usize,
    in_w: usize,
    in_c: usize,
    out_c: usize,
    kernel: usize,
    width: u32,
    acc_bits: u32,
) -> String {
    fill(
        FEEDFORWARD,
        &[
            ("IDX", rom.index.to_string()),
            ("W", width.to_string()),
            ("ACC_W", acc_bits.to_string()),
            ("K", kernel.to_string()),
            ("IN_H", in_h.to_string()),
            ("IN_W", in_w.to_string()),
            ("IN_C", in_c.to_string()),
            ("OUT_C", out_c.to_string()),
            ("RAM_DEPTH", (in_h * in_w * in_c).to_string()),
            ("ROM_DEPTH", rom.depth().to_string()),
            ("WEIGHT_WORDS", rom.weight_words.to_string()),
            ("BIAS_SHIFT", rom.bias_shift.to_string()),
            ("MEMFILE", rom.memfile.clone()),
            ("BIAS", bias_block(rom.bias_words > 0, "oc")),
        ],
    )
}

const DENSE: &str = r#"// Fully connected layer ${IDX}: ${IN_LEN} inputs, ${UNITS} units.
module dense_l${IDX} #(
    parameter W = ${W},
    parameter ACC_W = ${ACC_W}
) (
    input  wire             clk,
    input  wire             rst,
    input  wire [W-1:0]     in_data,
    input  wire             in_valid,
    output wire             in_ready,
    output reg  [ACC_W-1:0] out_data,
    output reg              out_valid,
    input  wire             out_ready
);
    localparam IN_LEN = ${IN_LEN};
    localparam UNITS = ${UNITS};
    localparam ROM_DEPTH = ${ROM_DEPTH};
    localparam WEIGHT_WORDS = ${WEIGHT_WORDS};
    localparam BIAS_SHIFT = ${BIAS_SHIFT};
    localparam N_STEPS = ${N_STEPS};

    reg [W-1:0] ram [0:IN_LEN-1];
    reg [W-1:0] rom [0:ROM_DEPTH-1];
    initial $readmemh("${MEMFILE}", rom);

    localparam S_FILL = 2'd0, S_MAC = 2'd1, S_EMIT = 2'd2;
    reg [1:0] sm;
    integer wr_addr;
    integer unit, step;
    reg signed [ACC_W-1:0] acc;
    wire signed [ACC_W-1:0] step_sum;

${BIAS}
    wire signed [ACC_W-1:0] base = (step == 0) ? bias_acc : acc;
    assign in_ready = (sm == S_FILL);

    generate
        localparam LANES = ${LANES};
        wire signed [ACC_W-1:0] partial [0:LANES];
        assign partial[0] = {ACC_W{1'b0}};
        genvar lane;
        for (lane = 0; lane < LANES; lane = lane + 1) begin : mac_lane
            wire [31:0] idx = step * LANES + lane;
            wire signed [W-1:0] a = (idx < IN_LEN) ? ram[idx] : {W{1'b0}};
            wire signed [W-1:0] b = (idx < IN_LEN) ? rom[unit * IN_LEN + idx] : {W{1'b0}};
            wire signed [2*W-1:0] prod = a * b;
            assign partial[lane + 1] = partial[lane] + {{(ACC_W-2*W){prod[2*W-1]}}, prod};
        end
        assign step_sum = partial[LANES];
    endgenerate

    always @(posedge clk) begin
        if (rst) begin
            sm        <= S_FILL;
            wr_addr   <= 0;
            unit      <= 0;
            step      <= 0;
            acc       <= {ACC_W{1'b0}};
            out_data  <= {ACC_W{1'b0}};
            out_valid <= 1'b0;
        end else begin
            case (sm)
                S_FILL: if (in_valid) begin
                    ram[wr_addr] <= in_data;
                    if (wr_addr == IN_LEN - 1) begin
                        wr_addr <= 0;
                        step    <= 0;
                        sm      <= S_MAC;
                    end else begin
                        wr_addr <= wr_addr + 1;
                    end
                end
                S_MAC: begin
                    acc  <= base + step_sum;
                    step <= step + 1;
                    if (step == N_STEPS - 1) begin
                        out_data  <= base + step_sum;
                        out_valid <= 1'b1;
                        sm        <= S_EMIT;
                    end
                end
                S_EMIT: if (out_ready) begin
                    out_valid <= 1'b0;
                    step      <= 0;
                    if (unit == UNITS - 1) begin
                        unit <= 0;
                        sm   <= S_FILL;
                    end else begin
                        unit <= unit + 1;
                        sm   <= S_MAC;
                    end
                end
                default: sm <= S_FILL;
            endcase
        end
    end
endmodule
"#;

pub fn dense(rom: &LayerRom, in_len: usize, units: usize, lanes: usize, width: u32, acc_bits: u32) -> Result<String> {
    if lanes == 0 || lanes > in_len {
        return Err(Error::invalid(format!(
            "dense unit lanes {lanes} outside 1..={in_len}"
        )));
    }
    Ok(fill(
        DENSE,
        &[
            ("IDX", rom.index.to_string()),
            ("W", width.to_string()),
            ("ACC_W", acc_bits.to_string()),
            ("IN_LEN", in_len.to_string()),
            ("UNITS", units.to_string()),
            ("ROM_DEPTH", rom.depth().to_string()),
            ("WEIGHT_WORDS", rom.weight_words.to_string()),
            ("BIAS_SHIFT", rom.bias_shift.to_string()),
            ("N_STEPS", in_len.div_ceil(lanes).to_string()),
            ("MEMFILE", rom.memfile.clone()),
            ("BIAS", bias_block(rom.bias_words > 0, "unit")),
            ("LANES", lanes.to_string()),
        ],
    ))
}

const RELU: &str = r#"// Sign mux: negative words become zero.
module relu #(
    parameter W = ${W}
) (
    input  wire [W-1:0] in_data,
    input  wire         in_valid,
    output wire         in_ready,
    output wire [W-1:0] out_data,
    output wire         out_valid,
    input  wire         out_ready
);
    assign out_data  = in_data[W-1] ? {W{1'b0}} : in_data;
    assign out_valid = in_valid;
    assign in_ready  = out_ready;
endmodule
"#;

pub fn relu(width: u32) -> String {
    fill(RELU, &[("W", width.to_string())])
}

const MAXPOOL: &str = r#"// ${M}x${M} max pooling with stride ${M}. Buffers the fmap, then reads each
// window into registers and reduces it through a comparator chain.
module maxpool_m${M} #(
    parameter W = ${W},
    parameter IN_H = ${M},
    parameter IN_W = ${M},
    parameter CH = 1
) (
    input  wire         clk,
    input  wire         rst,
    input  wire [W-1:0] in_data,
    input  wire         in_valid,
    output wire         in_ready,
    output wire [W-1:0] out_data,
    output wire         out_valid,
    input  wire         out_ready
);
    localparam M = ${M};
    localparam WIN = M * M;
    localparam OUT_H = IN_H / M;
    localparam OUT_W = IN_W / M;
    localparam DEPTH = IN_H * IN_W * CH;

    reg [W-1:0] ram [0:DEPTH-1];
    reg [WIN*W-1:0] win;
    localparam S_FILL = 2'd0, S_READ = 2'd1, S_EMIT = 2'd2;
    reg [1:0] sm;
    integer wr_addr;
    integer ch, orow, ocol, k;

    wire [31:0] rd_addr = (ch * IN_H + orow * M + k / M) * IN_W + ocol * M + k % M;

${TAPS}
${COMPARATORS}
    assign out_data  = ${RESULT};
    assign out_valid = (sm == S_EMIT);
    assign in_ready  = (sm == S_FILL);

    always @(posedge clk) begin
        if (rst) begin
            sm      <= S_FILL;
            wr_addr <= 0;
            ch      <= 0;
            orow    <= 0;
            ocol    <= 0;
            k       <= 0;
            win     <= {WIN*W{1'b0}};
        end else begin
            case (sm)
                S_FILL: if (in_valid) begin
                    ram[wr_addr] <= in_data;
                    if (wr_addr == DEPTH - 1) begin
                        wr_addr <= 0;
                        k       <= 0;
                        sm      <= S_READ;
                    end else begin
                        wr_addr <= wr_addr + 1;
                    end
                end
                S_READ: begin
                    win[k*W +: W] <= ram[rd_addr];
                    if (k == WIN - 1) begin
                        k  <= 0;
                        sm <= S_EMIT;
                    end else begin
                        k <= k + 1;
                    end
                end
                S_EMIT: if (out_ready) begin
                    sm <= S_READ;
                    if (ocol == OUT_W - 1) begin
                        ocol <= 0;
                        if (orow == OUT_H - 1) begin
                            orow <= 0;
                            if (ch == CH - 1) begin
                                ch <= 0;
                                sm <= S_FILL;
                            end else begin
                                ch <= ch + 1;
                            end
                        end else begin
                            orow <= orow + 1;
                        end
                    end else begin
                        ocol <= ocol + 1;
                    end
                end
                default: sm <= S_FILL;
            endcase
        end
    end
endmodule
"#;

/// Module name of the pooling unit for window side `size`.
pub fn maxpool_name(size: usize) -> String {
    format!("maxpool_m{size}")
}

/// Pooling unit with `size² - 1` comparators; earlier taps win ties.
pub fn maxpool(size: usize, width: u32) -> Result<String> {
    if size == 0 {
        return Err(Error::invalid("maxpool size must be >= 1"));
    }
    let win = size * size;
    let taps: String = (0..win)
        .map(|i| format!("    wire signed [W-1:0] v{i} = win[{i}*W +: W];\n"))
        .collect();
    let comparators: String = (1..win)
        .map(|i| {
            let prev = if i == 1 { "v0".to_string() } else { format!("cmp_{}", i - 1) };
            format!("    wire signed [W-1:0] cmp_{i} = (v{i} > {prev}) ? v{i} : {prev};\n")
        })
        .collect();
    let result = if win == 1 { "v0".to_string() } else { format!("cmp_{}", win - 1) };
    Ok(fill(
        MAXPOOL,
        &[
            ("M", size.to_string()),
            ("W", width.to_string()),
            ("TAPS", taps),
            ("COMPARATORS", comparators),
            ("RESULT", result),
        ],
    ))
}

const ADJUST_HEAD: &str = r#"// Precision adjust for layer ${IDX}: ${IN_BITS}-bit word to W bits, shift ${SHIFT}.
module adjust_l${IDX} #(
    parameter IN_BITS = ${IN_BITS},
    parameter W = ${W}
) (
    input  wire [IN_BITS-1:0] in_data,
    input  wire               in_valid,
    output wire               in_ready,
    output wire [W-1:0]       out_data,
    output wire               out_valid,
    input  wire               out_ready
);
"#;

const ADJUST_RIGHT: &str = r#"    // round half away from zero, then shift right
    localparam SHIFT = ${SHIFT};
    localparam RW = IN_BITS + 2;
    wire signed [IN_BITS-1:0] x = in_data;
    wire neg = x[IN_BITS-1];
    wire [IN_BITS:0] mag = neg ? -{x[IN_BITS-1], x} : {1'b0, x};
    wire [IN_BITS:0] half = {{IN_BITS{1'b0}}, 1'b1} << (SHIFT - 1);
    wire [IN_BITS:0] mag_r = (mag + half) >> SHIFT;
    wire signed [RW-1:0] rounded = neg ? -$signed({1'b0, mag_r}) : $signed({1'b0, mag_r});
"#;

const ADJUST_NONE: &str = r#"    // no shift: saturation only
    localparam RW = IN_BITS;
    wire signed [RW-1:0] rounded = in_data;
"#;

const ADJUST_LEFT: &str = r#"    // exact left shift
    localparam SHIFT = ${LSHIFT};
    localparam RW = IN_BITS + SHIFT;
    wire signed [IN_BITS-1:0] x = in_data;
    wire signed [RW-1:0] wide = x;
    wire signed [RW-1:0] rounded = wide <<< SHIFT;
"#;

const ADJUST_TAIL: &str = r#"    wire signed [RW-1:0] max_v = {{(RW-W+1){1'b0}}, {(W-1){1'b1}}};
    wire signed [RW-1:0] min_v = {{(RW-W+1){1'b1}}, {(W-1){1'b0}}};
    assign out_data  = (rounded > max_v) ? max_v[W-1:0]
                     : (rounded < min_v) ? min_v[W-1:0]
                     : rounded[W-1:0];
    assign out_valid = in_valid;
    assign in_ready  = out_ready;
endmodule
"#;

/// Requantization unit: `shift = F_in - F_out` (negative shifts left).
pub fn precision_adjust(index: usize, shift: i32, in_bits: u32, width: u32) -> Result<String> {
    if in_bits < width {
        return Err(Error::invalid(format!(
            "precision adjust input ({in_bits} bits) narrower than output ({width} bits)"
        )));
    }
    let body = match shift {
        0 => ADJUST_NONE.to_string(),
        s if s > 0 => {
            if s as u32 > in_bits {
                return Err(Error::invalid(format!("shift {s} exceeds {in_bits}-bit input")));
            }
            fill(ADJUST_RIGHT, &[("SHIFT", s.to_string())])
        }
        s => fill(ADJUST_LEFT, &[("LSHIFT", (-s).to_string())]),
    };
    let head = fill(
        ADJUST_HEAD,
        &[
            ("IDX", index.to_string()),
            ("IN_BITS", in_bits.to_string()),
            ("W", width.to_string()),
            ("SHIFT", shift.to_string()),
        ],
    );
    Ok(format!("{head}{body}{ADJUST_TAIL}"))
}

const ARBITER: &str = r#"// Fixed-priority arbiter for the shared convolution unit. The lowest
// requesting index wins; a grant holds until its client drops req.
module conv_arbiter #(
    parameter N = ${N}
) (
    input  wire         clk,
    input  wire         rst,
    input  wire [N-1:0] req,
    output reg  [N-1:0] grant
);
    wire         busy = |(grant & req);
    wire [N-1:0] pick = req & (~req + {{(N-1){1'b0}}, 1'b1});

    always @(posedge clk) begin
        if (rst)
            grant <= {N{1'b0}};
        else if (!busy)
            grant <= pick;
    end

    // synthesis translate_off
    always @(posedge clk) begin
        if (!rst && ((grant & (grant - {{(N-1){1'b0}}, 1'b1})) != {N{1'b0}})) begin
            $display("conv_arbiter: grant %b is not one-hot", grant);
            $finish;
        end
    end
    // synthesis translate_on
endmodule
"#;

pub fn arbiter(clients: usize) -> Result<String> {
    if clients == 0 {
        return Err(Error::invalid("arbiter needs at least one client"));
    }
    Ok(fill(ARBITER, &[("N", clients.to_string())]))
}

/// Parameterized unit kinds that do not own a ROM.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnitKind {
    Relu,
    MaxPool(usize),
    /// Layer index, shift, input bits.
    PrecisionAdjust { index: usize, shift: i32, in_bits: u32 },
    Arbiter(usize),
}

pub fn emit_unit(kind: UnitKind, width: u32) -> Result<String> {
    match kind {
        UnitKind::Relu => Ok(relu(width)),
        UnitKind::MaxPool(m) => maxpool(m, width),
        UnitKind::PrecisionAdjust { index, shift, in_bits } => precision_adjust(index, shift, in_bits, width),
        UnitKind::Arbiter(n) => arbiter(n),
    }
}
