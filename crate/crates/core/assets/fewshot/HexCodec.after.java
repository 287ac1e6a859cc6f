package org.example.codec;

import java.util.Properties;

public final class HexCodec {
    private static final char[] HEX_DIGITS = "0123456789abcdef".toCharArray();

    private HexCodec() {
    }

    public static String toHex(byte[] bytes) {
        StringBuilder sb = new StringBuilder(bytes.length * 2);
        for (byte b : bytes) {
            sb.append(HEX_DIGITS[(b & 0xFF) >> 4]);
            sb.append(HEX_DIGITS[b & 0x0F]);
        }
        return sb.toString();
    }

    public static Boolean isUpperCase(Properties props) {
        String value = props.getProperty("hex.uppercase");
        if (value == null) {
            return false;
        }
        return "yes".equalsIgnoreCase(value) ? true : false;
    }
}
